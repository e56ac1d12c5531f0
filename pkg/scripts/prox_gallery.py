"""Tabulate scalar prox curves for a family of regularizers.

Writes one (t, prox) CSV per entry under results/gallery/, ready to plot.
Equivalent to `threshgrad gallery <spec.ini>` for each spec.
"""

import sys

from threshgrad.cli import GallerySpec, emit_prox_gallery

CURVES = [
    # name, interval, penalty spec
    ("l1", (-1.0, 1.0), ("none",)),
    ("asymmetric_box", (-0.5, 1.5), ("none",)),
    ("power2", (-1.0, 1.0), ("power", 2.0, 1.0)),
    ("power4", (-1.0, 1.0), ("power", 4.0, 1.0)),
    ("power15_box", (-1.0, 1.0), ("power_box", 1.5, 1.0, -1.0, 1.0)),
]


def main() -> int:
    for name, interval, penalty in CURVES:
        spec = GallerySpec(
            lo=-3.0,
            hi=3.0,
            steps=601,
            lam=0.5,
            interval=interval,
            penalty=penalty,
            out_path=f"results/gallery/{name}.csv",
        )
        emit_prox_gallery(spec)
        print(f"wrote {spec.out_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
