"""Run the prefactor adjudication and freeze its outcome as a package fixture."""

from __future__ import annotations

import argparse
import json
from pathlib import Path

from sir_asymptotics.clt import ADJUDICATED_VARIANT
from sir_asymptotics.montecarlo import adjudicate_variants

DEFAULT_OUT = Path(__file__).resolve().parents[1] / "src" / "sir_asymptotics" / "data" / "adjudication.json"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--reps", type=int, default=4000)
    ap.add_argument("--N", type=int, default=256)
    ap.add_argument("--seed", type=int, default=20240601)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", type=Path, default=DEFAULT_OUT)
    args = ap.parse_args()
    record = adjudicate_variants(N=args.N, R=args.reps, seed=args.seed, workers=args.workers)
    fits = record["rho_fit_everywhere"]
    if fits != [ADJUDICATED_VARIANT]:
        raise SystemExit(f"simulation no longer singles out {ADJUDICATED_VARIANT}: {fits}")
    record["selected"] = ADJUDICATED_VARIANT
    args.out.write_text(json.dumps(record, indent=1, sort_keys=True) + "\n")
    print(f"wrote {args.out}: selected {ADJUDICATED_VARIANT}")


if __name__ == "__main__":
    main()
