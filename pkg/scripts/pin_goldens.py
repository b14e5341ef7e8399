"""Re-derive the pinned criterion 7 values from the bundled dataset.

Run from the repo root after an intentional model change:

    python scripts/pin_goldens.py

and commit tests/goldens/criterion7.json together with the change.
"""

from __future__ import annotations

import json
from pathlib import Path

from flexopt.ingestion import generate_synthetic_dataset
from flexopt.scenarios import context_presets, run_study, scenario_presets

OUT = Path(__file__).resolve().parents[1] / "tests" / "goldens" / "criterion7.json"
SEED, HORIZON = 1, 168
SCENARIOS = ("REF", "noFlex", "fullFlex")
FIELDS = ("pi_rate", "eps_rate", "peak_buy")


def main() -> None:
    ds = generate_synthetic_dataset(SEED, HORIZON)
    scen = [s for s in scenario_presets() if s.name in SCENARIOS]
    study = run_study(ds, context_presets(ds.prices), scen)
    if not study.all_ok:
        raise SystemExit("study has failed cells; refusing to pin")
    values = {
        ctx: {
            name: {f: getattr(study.cell(ctx, name).metrics, f) for f in FIELDS}
            for name in ("noFlex", "fullFlex")
        }
        for ctx in study.context_names()
    }
    doc = {"seed": SEED, "horizon": HORIZON, "values": values}
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
