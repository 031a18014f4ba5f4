"""Convert torchvision VGG-19 weights into a loss-network archive.

    python3 tools/export_vgg19.py --out vgg19.dfcw                # ImageNet weights (downloads)
    python3 tools/export_vgg19.py --out vgg19.dfcw --state-dict vgg19.pth
    python3 tools/export_vgg19.py --out random.dfcw --random      # untrained, for plumbing tests

torchvision feeds ``(x / 255 - mean) / std`` into conv1_1. The archive keeps
raw [0, 255] inputs: its means are ``255 * mean`` and conv1_1's weights are
divided by ``255 * std`` per input channel, so features are identical
(zero padding included, since padding happens after mean subtraction).
"""

import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from dfcdit import archive  # noqa: E402
from dfcdit.lossnet import architecture_layers, from_archive  # noqa: E402

TORCH_MEAN = (0.485, 0.456, 0.406)
TORCH_STD = (0.229, 0.224, 0.225)


def conv_names():
    return [l[1] for l in architecture_layers("vgg19") if l[0] == "conv"]


def convert(state_dict, mean=TORCH_MEAN, std=TORCH_STD):
    """Map a torchvision ``vgg19().state_dict()`` onto archive tensors.

    Returns ``(tensors, means)``.
    """
    conv_keys = sorted(
        {k.rsplit(".", 1)[0] for k in state_dict if k.startswith("features.") and k.endswith(".weight")},
        key=lambda k: int(k.split(".")[1]),
    )
    names = conv_names()
    if len(conv_keys) < len(names):
        raise ValueError(f"state dict has {len(conv_keys)} conv layers, need {len(names)}")
    tensors = {}
    for name, key in zip(names, conv_keys):
        w = np.asarray(state_dict[f"{key}.weight"].detach().cpu().numpy(), dtype=np.float64)
        b = np.asarray(state_dict[f"{key}.bias"].detach().cpu().numpy(), dtype=np.float64)
        if name == "conv1_1":
            w = w / (255.0 * np.asarray(std))[None, :, None, None]
        tensors[f"{name}.weight"] = w.astype(np.float32)
        tensors[f"{name}.bias"] = b.astype(np.float32)
    return tensors, [255.0 * m for m in mean]


def export(state_dict, out, source="torchvision"):
    tensors, means = convert(state_dict)
    archive.save(out, "vgg19", tensors, {"widths": [64, 128, 256, 512, 512]}, means, extra={"source": source})
    header, loaded = archive.load(out)
    return from_archive(header, loaded, str(out))  # validates shapes


def main(argv=None):
    ap = argparse.ArgumentParser(description="Export VGG-19 (up to conv5_1) as a loss-network archive.")
    ap.add_argument("--out", required=True)
    src = ap.add_mutually_exclusive_group()
    src.add_argument("--state-dict", help="path to a saved torchvision vgg19 state dict")
    src.add_argument("--random", action="store_true", help="untrained weights (no download)")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    import torch
    from torchvision.models import VGG19_Weights, vgg19

    if args.state_dict:
        state, source = torch.load(args.state_dict, map_location="cpu"), f"state dict {args.state_dict}"
    elif args.random:
        torch.manual_seed(args.seed)
        state, source = vgg19(weights=None).state_dict(), f"torchvision random init seed {args.seed}"
    else:
        state, source = vgg19(weights=VGG19_Weights.IMAGENET1K_V1).state_dict(), "torchvision IMAGENET1K_V1"
    net = export(state, args.out, source)
    print(f"wrote {args.out}: {len(net.params)} tensors, means {[round(m, 3) for m in net.means]}")


if __name__ == "__main__":
    main()
