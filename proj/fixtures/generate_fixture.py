#!/usr/bin/env python3
"""Train the desk-scale fixture CNN and write the bundle used by the C++ tests.

Output (default: fixtures/cnn):
  model.panew    PANEW001 weights, input pixels on the 0-255 scale
  images/*.ppm   100-image evaluation set
  labels.csv     filename,label
  manifest.json  layer mapping, scaling, training accuracy, probe logits

Same seed, same bytes.
"""

import argparse
import json
import struct
import zlib
from pathlib import Path

import numpy as np
import torch
from torch import nn

KIND = {nn.Linear: 1, nn.Conv2d: 2, nn.ReLU: 3, nn.MaxPool2d: 4, nn.AvgPool2d: 5, nn.BatchNorm2d: 6, nn.Flatten: 7}
SIZE = 32


def make_images(rng, n):
    """Noisy dark background with one coloured square: red -> 0, blue -> 1."""
    images = np.empty((n, 3, SIZE, SIZE), dtype=np.uint8)
    labels = rng.integers(0, 2, size=n)
    for i in range(n):
        img = rng.integers(12, 70, size=(3, SIZE, SIZE)).astype(np.float64)
        side = int(rng.integers(6, 11))
        r0, c0 = rng.integers(0, SIZE - side, size=2)
        colour = np.array([150.0, 60.0, 70.0]) if labels[i] == 0 else np.array([70.0, 60.0, 150.0])
        colour += rng.normal(0, 25, size=3)
        patch = colour[:, None, None] + rng.normal(0, 20, size=(3, side, side))
        img[:, r0:r0 + side, c0:c0 + side] = patch
        # a green distractor square shared by both classes
        dside = int(rng.integers(4, 8))
        d0, e0 = rng.integers(0, SIZE - dside, size=2)
        img[1, d0:d0 + dside, e0:e0 + dside] += 90
        images[i] = np.clip(np.rint(img), 1, 255).astype(np.uint8)
    return images, labels.astype(np.int64)


def build():
    return nn.Sequential(
        nn.Conv2d(3, 8, 3, padding=1), nn.ReLU(), nn.MaxPool2d(2),
        nn.Conv2d(8, 16, 3, padding=1), nn.ReLU(), nn.AvgPool2d(2),
        nn.Flatten(), nn.Linear(16 * 8 * 8, 32), nn.ReLU(), nn.Linear(32, 2),
    )


def f32_bytes(t):
    return np.ascontiguousarray(t.detach().double().numpy().astype("<f4")).tobytes()


def export(model, path):
    names = [n for n, _ in model.named_children()]
    out = bytearray(b"PANEW001")
    out += struct.pack("<I", len(model))
    out += struct.pack("<III", 3, SIZE, SIZE)
    mapping = []
    for name, layer in zip(names, model):
        kind = KIND.get(type(layer))
        if kind is None:
            raise ValueError(f"unsupported layer kind {type(layer).__name__}")
        label = f"{type(layer).__name__.lower()}{name}".encode()
        out += struct.pack("<BH", kind, len(label)) + label
        if isinstance(layer, nn.Linear):
            out += struct.pack("<II", layer.out_features, layer.in_features)
            out += f32_bytes(layer.weight) + f32_bytes(layer.bias)
        elif isinstance(layer, nn.Conv2d):
            oc, ic, kh, kw = layer.weight.shape
            out += struct.pack("<IIIIII", oc, ic, kh, kw, layer.stride[0], layer.padding[0])
            out += f32_bytes(layer.weight) + f32_bytes(layer.bias)
        elif isinstance(layer, (nn.MaxPool2d, nn.AvgPool2d)):
            out += struct.pack("<III", layer.kernel_size, layer.kernel_size, layer.stride)
        mapping.append({"source": f"{name}:{type(layer).__name__}", "kind": kind})
    out += struct.pack("<I", zlib.crc32(bytes(out)) & 0xFFFFFFFF)
    path.write_bytes(bytes(out))
    return mapping


def write_ppm(path, img):
    c, h, w = img.shape
    path.write_bytes(f"P6\n{w} {h}\n255\n".encode() + np.transpose(img, (1, 2, 0)).tobytes())


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parent / "cnn")
    ap.add_argument("--epochs", type=int, default=6)
    args = ap.parse_args()

    torch.manual_seed(args.seed)
    torch.set_num_threads(1)
    torch.use_deterministic_algorithms(True)
    rng = np.random.default_rng(args.seed)

    train_x, train_y = make_images(rng, 2000)
    eval_x, eval_y = make_images(rng, 100)

    model = build()
    opt = torch.optim.Adam(model.parameters(), lr=2e-3, weight_decay=1e-4)
    xs = torch.from_numpy(train_x).float() / 255.0
    ys = torch.from_numpy(train_y)
    for _ in range(args.epochs):
        order = torch.randperm(len(xs))
        for b in range(0, len(xs), 50):
            idx = order[b:b + 50]
            opt.zero_grad()
            nn.functional.cross_entropy(model(xs[idx]), ys[idx]).backward()
            opt.step()

    model.eval()
    with torch.no_grad():
        train_acc = float((model(xs).argmax(1) == ys).double().mean())
        eval_acc = float((model(torch.from_numpy(eval_x).float() / 255.0).argmax(1) == torch.from_numpy(eval_y))
                         .double().mean())
        if train_acc < 0.95:
            raise SystemExit(f"train accuracy {train_acc:.3f} below 0.95; try another seed")
        # fold the 0-255 input scaling into the first conv
        model[0].weight.div_(255.0)

    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "images").mkdir(exist_ok=True)
    mapping = export(model, args.out / "model.panew")

    rows = ["filename,label"]
    for i, (img, label) in enumerate(zip(eval_x, eval_y)):
        name = f"images/img_{i:03d}.ppm"
        write_ppm(args.out / name, img)
        rows.append(f"{name},{int(label)}")
    (args.out / "labels.csv").write_text("\n".join(rows) + "\n")

    # probe logits in float64 from the exported (f32-rounded) parameters
    ref = build().double()
    with torch.no_grad():
        for dst, src in zip(ref.parameters(), model.parameters()):
            dst.copy_(src.detach().float().double())
        probes = torch.from_numpy(eval_x[:10]).double()
        probe_logits = ref(probes).tolist()

    manifest = {
        "source": f"generate_fixture.py seed={args.seed} epochs={args.epochs}",
        "layers": mapping,
        "input_shape": [3, SIZE, SIZE],
        "pixel_scale": 255,
        "normalization": {"folded_into": "conv 0", "scale": 1.0 / 255.0, "mean": [0, 0, 0], "std": [1, 1, 1]},
        "train_accuracy": train_acc,
        "eval_accuracy": eval_acc,
        "probes": [{"image": f"images/img_{i:03d}.ppm", "logits": l} for i, l in enumerate(probe_logits)],
    }
    (args.out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"train acc {train_acc:.3f}, eval acc {eval_acc:.3f}")


if __name__ == "__main__":
    main()
