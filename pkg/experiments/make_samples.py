"""Write synthetic rate samples for the three reference shapes.

The measured field data behind the published figures is not bundled; these
stand-ins share its qualitative shape (early taper, sharp 80 % drop,
intermediate) and are regenerated bit-identically from fixed seeds.
"""

import sys
from pathlib import Path

from charge_eq.data_io import reference_curve, synthetic_samples, write_samples

NAMES = ("audi_like", "ford_like", "tesla_like")


def main(out_dir: str) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for seed, name in enumerate(NAMES):
        samples = synthetic_samples(reference_curve(name), 400, noise=0.03, seed=seed, label=name)
        write_samples(samples, out / f"{name}.csv")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else str(Path(__file__).parent / "data"))
