#!/usr/bin/env python3
"""Convert a timm-style ViT checkpoint into the TARC archive read by crsnet.

Accepts PyTorch (.pt/.pth/.bin), safetensors or NumPy .npz state dicts with
timm naming (patch_embed.proj.weight, blocks.N.attn.qkv.weight, ...).
Classifier heads and DINO projection heads are dropped.

    python scripts/convert_checkpoint.py vit_small_patch16_224.pth encoder.tarc

The encoder section of the run config must match the checkpoint (dim,
depth, heads, mlp_hidden, patch_size, image_size, register_tokens,
layer_norm_eps and the input normalization).
"""

import argparse
import re
import struct
import sys
from pathlib import Path

import numpy as np

MAGIC = b"TARC0001"
DTYPE_F32 = 1
PREFIXES = ("module.", "backbone.", "encoder.", "model.", "student.", "teacher.")
DROP = re.compile(r"^(head|fc_norm|dino_head|mask_token|ls\d|.*\.ls\d\.)")


def load_state(path):
    suffix = path.suffix.lower()
    if suffix == ".npz":
        return dict(np.load(path))
    if suffix == ".safetensors":
        from safetensors.numpy import load_file

        return load_file(str(path))
    import torch

    obj = torch.load(path, map_location="cpu", weights_only=True)
    for key in ("state_dict", "model", "teacher", "student"):
        if isinstance(obj, dict) and key in obj and isinstance(obj[key], dict):
            obj = obj[key]
            break
    return {k: v.float().numpy() for k, v in obj.items() if hasattr(v, "numpy")}


def strip(name):
    changed = True
    while changed:
        changed = False
        for p in PREFIXES:
            if name.startswith(p):
                name, changed = name[len(p):], True
    return name


def convert(state):
    out = {}
    for raw, value in state.items():
        name = strip(raw)
        if DROP.match(name):
            continue
        a = np.asarray(value, dtype=np.float32)
        if name == "patch_embed.proj.weight":
            # conv [dim, channels, p, p] -> linear [dim, channels * p * p]
            out["patch_embed.weight"] = a.reshape(a.shape[0], -1)
        elif name == "patch_embed.proj.bias":
            out["patch_embed.bias"] = a
        elif name == "cls_token":
            out[name] = a.reshape(-1)
        elif name in ("pos_embed", "register_tokens", "reg_token"):
            out["register_tokens" if name == "reg_token" else name] = a.reshape(-1, a.shape[-1])
        elif name.startswith(("blocks.", "norm.")):
            out[name] = a
        else:
            print(f"skipping {raw} {a.shape}", file=sys.stderr)
    missing = [k for k in ("patch_embed.weight", "cls_token", "pos_embed", "norm.weight") if k not in out]
    if missing:
        sys.exit(f"not a ViT state dict: missing {', '.join(missing)}")
    return out


def order(names):
    """Archive order used by crsnet itself, so equal weights give equal bytes."""

    def key(n):
        m = re.match(r"blocks\.(\d+)\.(.*)", n)
        if m:
            sub = ["norm1.weight", "norm1.bias", "norm2.weight", "norm2.bias", "attn.qkv.weight", "attn.qkv.bias",
                   "attn.proj.weight", "attn.proj.bias", "mlp.fc1.weight", "mlp.fc1.bias", "mlp.fc2.weight",
                   "mlp.fc2.bias"]
            rank = sub.index(m.group(2)) if m.group(2) in sub else len(sub)
            return (1, int(m.group(1)), rank, n)
        head = ["patch_embed.weight", "patch_embed.bias", "cls_token", "register_tokens", "pos_embed"]
        if n in head:
            return (0, head.index(n), 0, n)
        tail = ["norm.weight", "norm.bias"]
        return (2, tail.index(n) if n in tail else len(tail), 0, n)

    return sorted(names, key=key)


def write_tarc(path, tensors):
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(tensors)))
        for name in order(tensors):
            a = np.ascontiguousarray(tensors[name], dtype="<f4")
            if not np.all(np.isfinite(a)):
                sys.exit(f"{name} holds non-finite values")
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<I", a.ndim))
            f.write(struct.pack(f"<{a.ndim}I", *a.shape))
            f.write(struct.pack("<B", DTYPE_F32))
            f.write(a.tobytes())


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("checkpoint", type=Path)
    ap.add_argument("output", type=Path)
    args = ap.parse_args()
    tensors = convert(load_state(args.checkpoint))
    write_tarc(args.output, tensors)
    depth = len({n.split(".")[1] for n in tensors if n.startswith("blocks.")})
    dim = tensors["cls_token"].shape[0]
    print(f"wrote {len(tensors)} tensors (dim {dim}, depth {depth}) to {args.output}")


if __name__ == "__main__":
    main()
