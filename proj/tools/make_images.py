"""Builds the bundled 10-image grayscale set (100x100 P5 PGMs) and its manifest."""

import argparse
import json
import pathlib
import zlib

import numpy as np
from skimage import color, data, transform, util

SOURCES = ["camera", "coins", "moon", "page", "text", "clock", "brick", "grass", "astronaut", "coffee"]


def load_gray(name):
    img = getattr(data, name)()
    if img.ndim == 3:
        img = color.rgb2gray(img[..., :3])
    return util.img_as_float(img)


def center_square(img):
    h, w = img.shape
    s = min(h, w)
    top, left = (h - s) // 2, (w - s) // 2
    return img[top:top + s, left:left + s]


def write_pgm(path, pixels):
    h, w = pixels.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(pixels.astype(np.uint8).tobytes())


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="data/images")
    parser.add_argument("--size", type=int, default=100)
    args = parser.parse_args()

    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for name in SOURCES:
        img = transform.resize(center_square(load_gray(name)), (args.size, args.size), anti_aliasing=True)
        pixels = np.clip(np.rint(img * 255.0), 0, 255)
        path = out / f"{name}.pgm"
        write_pgm(path, pixels)
        crc = zlib.crc32(path.read_bytes()) & 0xFFFFFFFF
        entries.append({
            "path": path.name,
            "geometry": {"kind": "grid", "height": args.size, "width": args.size},
            "checksum": f"crc32:{crc:08x}",
        })

    manifest = {
        "source": "scikit-image sample images, center-cropped, resized to "
                  f"{args.size}x{args.size}, 8-bit grayscale",
        "entries": entries,
        "preprocessing": [{"step": "standardize"}],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


if __name__ == "__main__":
    main()
