#!/usr/bin/env python3
"""Export a truncated ImageNet-pretrained torchvision backbone to ONNX.

Writes <out> and its manifest <out stem>.json in the format read by
`cband extract --backbone`. Requires torch, torchvision, onnx and network access
for the weight download (or a populated torch hub cache).

    python tools/export_backbone.py --arch resnet50 --stage 2 --out models/resnet50.onnx
"""

import argparse
import hashlib
import json
import pathlib

import torch
import torchvision

# (channels, cumulative stride) per stage
RESNET50 = {1: (256, 4), 2: (512, 8), 3: (1024, 16), 4: (2048, 32)}
VGG16 = {1: (64, 2), 2: (128, 4), 3: (256, 8), 4: (512, 16), 5: (512, 32)}


def resnet50(stage):
    net = torchvision.models.resnet50(weights=torchvision.models.ResNet50_Weights.IMAGENET1K_V1)
    layers = [net.conv1, net.bn1, net.relu, net.maxpool, net.layer1, net.layer2, net.layer3, net.layer4]
    return torch.nn.Sequential(*layers[: 4 + stage]), RESNET50[stage], "ceil"


def vgg16(stage):
    net = torchvision.models.vgg16(weights=torchvision.models.VGG16_Weights.IMAGENET1K_V1)
    pools = [i for i, m in enumerate(net.features) if isinstance(m, torch.nn.MaxPool2d)]
    return net.features[: pools[stage - 1] + 1], VGG16[stage], "floor"


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--arch", choices=["resnet50", "vgg16"], required=True)
    p.add_argument("--stage", type=int, default=2)
    p.add_argument("--out", type=pathlib.Path, required=True)
    args = p.parse_args()

    model, (channels, stride), rounding = {"resnet50": resnet50, "vgg16": vgg16}[args.arch](args.stage)
    model.eval()
    args.out.parent.mkdir(parents=True, exist_ok=True)
    dummy = torch.zeros(1, 3, 224, 224)
    torch.onnx.export(
        model,
        dummy,
        args.out,
        input_names=["input"],
        output_names=["features"],
        dynamic_axes={"input": {2: "height", 3: "width"}, "features": {2: "fh", 3: "fw"}},
        opset_version=13,
        do_constant_folding=True,
        dynamo=False,
    )
    with torch.no_grad():
        out = model(dummy)
    assert out.shape[1] == channels, (out.shape, channels)

    manifest = {
        "name": f"{args.arch}-stage{args.stage}",
        "stage_index": args.stage,
        "expected_channels": channels,
        "cumulative_stride": stride,
        "sha256": hashlib.sha256(args.out.read_bytes()).hexdigest(),
        "spatial_rounding": rounding,
        "min_input": 32,
    }
    args.out.with_suffix(".json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(json.dumps({"model": str(args.out), **manifest}, indent=2))


if __name__ == "__main__":
    main()
