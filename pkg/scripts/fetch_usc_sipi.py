#!/usr/bin/env python3
"""Download the USC-SIPI "miscellaneous" volume and convert it to 8-bit PGM.

The images are not redistributed with this repository. Check the terms of
use at https://sipi.usc.edu/database/ before downloading. Colour images are
converted to luminance. Lena (4.2.04) was withdrawn from the public volume,
so supply your own copy and point GRSWATERMARK_LENA at it if you want the
optional Lena checks.

Usage:
    python3 scripts/fetch_usc_sipi.py --out images/
    python3 scripts/fetch_usc_sipi.py --archive misc.zip --out images/

Requires Pillow for TIFF decoding (``pip install Pillow``).
"""

import argparse
import io
import sys
import urllib.request
import zipfile
from pathlib import Path

import numpy as np

from grswatermark.image_io import Image, save

DEFAULT_URL = "https://sipi.usc.edu/database/misc.zip"


def luminance(data: bytes) -> np.ndarray:
    from PIL import Image as PILImage

    with PILImage.open(io.BytesIO(data)) as im:
        return np.asarray(im.convert("L"), dtype=np.float64)


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--url", default=DEFAULT_URL)
    p.add_argument("--archive", help="use an already downloaded zip instead of fetching")
    p.add_argument("--out", required=True, help="directory for the PGM files")
    p.add_argument("--size", type=int, default=512, help="keep only SIZE x SIZE images (0 keeps all)")
    args = p.parse_args(argv)

    if args.archive:
        blob = Path(args.archive).read_bytes()
    else:
        print(f"downloading {args.url}", file=sys.stderr)
        with urllib.request.urlopen(args.url) as resp:
            blob = resp.read()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = 0
    with zipfile.ZipFile(io.BytesIO(blob)) as zf:
        for info in zf.infolist():
            if not info.filename.lower().endswith((".tiff", ".tif")):
                continue
            a = luminance(zf.read(info))
            if args.size and a.shape != (args.size, args.size):
                continue
            if a.shape[0] % 2 or a.shape[1] % 2:
                continue
            target = out / (Path(info.filename).stem + ".pgm")
            save(Image(a), target)
            written += 1
            print(target)
    print(f"{written} images written to {out}", file=sys.stderr)
    return 0 if written else 1


if __name__ == "__main__":
    sys.exit(main())
