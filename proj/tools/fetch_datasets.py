#!/usr/bin/env python3
"""Fetch the benchmark datasets into data/ and write data/MANIFEST.json.

boston.csv    Boston housing, 506 x 14, target MEDV (from the mlxtend wheel)
concrete.csv  Concrete compressive strength, 1030 x 9, target
              compressive_strength (from the rdatasets package)
energy.csv    Energy efficiency, 768 x 10, targets Y1 (heating) and Y2
              (cooling); not redistributed by any Python package, pass the
              UCI ENB2012_data.xlsx (or a CSV export) with --energy

Needs pip access. rdatasets is installed on demand when missing.
"""

import argparse
import csv
import hashlib
import io
import json
import pathlib
import subprocess
import sys
import tempfile
import zipfile

BOSTON_COLUMNS = ["CRIM", "ZN", "INDUS", "CHAS", "NOX", "RM", "AGE", "DIS", "RAD", "TAX", "PTRATIO", "B",
                  "LSTAT", "MEDV"]
ENERGY_COLUMNS = ["X1", "X2", "X3", "X4", "X5", "X6", "X7", "X8", "Y1", "Y2"]


def pip_download(spec, dest):
    subprocess.run([sys.executable, "-m", "pip", "download", "--no-deps", "-q", "-d", str(dest), spec], check=True)
    wheels = sorted(pathlib.Path(dest).glob("*.whl"))
    if not wheels:
        raise SystemExit(f"pip download {spec} produced no wheel")
    return wheels[-1]


def write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def fetch_boston(out):
    with tempfile.TemporaryDirectory() as tmp:
        wheel = pip_download("mlxtend==0.24.0", tmp)
        with zipfile.ZipFile(wheel) as z:
            text = z.read("mlxtend/data/data/boston_housing.csv").decode()
    rows = []
    for line in text.strip().splitlines():
        cells = [c for c in line.strip().split(",") if c != ""]
        rows.append([repr(float(c)) for c in cells])
    assert len(rows) == 506 and all(len(r) == 14 for r in rows), "unexpected Boston layout"
    write_rows(out, BOSTON_COLUMNS, rows)


def fetch_concrete(out):
    try:
        import rdatasets
    except ImportError:
        subprocess.run([sys.executable, "-m", "pip", "install", "-q", "rdatasets==0.2.10"], check=True)
        import rdatasets
    df = rdatasets.data("modeldata", "concrete").drop(columns=["rownames"])
    assert df.shape == (1030, 9), "unexpected concrete layout"
    df.to_csv(out, index=False, lineterminator="\n")


def convert_energy(src, out):
    src = pathlib.Path(src)
    if src.suffix.lower() in (".xlsx", ".xls"):
        import pandas as pd
        df = pd.read_excel(src).iloc[:, :10].dropna(how="all")
        df.columns = ENERGY_COLUMNS
        df.to_csv(out, index=False, lineterminator="\n")
    else:
        import pandas as pd
        df = pd.read_csv(src, sep=None, engine="python").iloc[:, :10].dropna(how="all")
        df.columns = ENERGY_COLUMNS
        df.to_csv(out, index=False, lineterminator="\n")


def describe(path):
    data = path.read_bytes()
    rows = list(csv.reader(io.StringIO(data.decode())))
    return {"file": path.name, "rows": len(rows) - 1, "columns": len(rows[0]),
            "sha256": hashlib.sha256(data).hexdigest()}


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "data"))
    ap.add_argument("--energy", help="path to ENB2012_data.xlsx or a CSV export of it")
    ap.add_argument("--verify", action="store_true", help="only check existing files against MANIFEST.json")
    args = ap.parse_args()
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest_path = out / "MANIFEST.json"

    if args.verify:
        manifest = json.loads(manifest_path.read_text())
        bad = 0
        for entry in manifest["datasets"]:
            p = out / entry["file"]
            if not p.exists():
                print(f"missing  {entry['file']}")
                bad += 1
                continue
            ok = describe(p) == entry
            print(f"{'ok' if ok else 'MISMATCH':8} {entry['file']}")
            bad += not ok
        return 1 if bad else 0

    fetch_boston(out / "boston.csv")
    fetch_concrete(out / "concrete.csv")
    if args.energy:
        convert_energy(args.energy, out / "energy.csv")
    else:
        print("energy.csv skipped: download ENB2012_data.xlsx from the UCI repository (dataset 242) "
              "and rerun with --energy PATH", file=sys.stderr)
    entries = [describe(out / n) for n in ("boston.csv", "concrete.csv", "energy.csv") if (out / n).exists()]
    manifest_path.write_text(json.dumps({"datasets": entries}, indent=2) + "\n")
    for e in entries:
        print(f"{e['file']:14} {e['rows']:5} rows {e['columns']:3} cols  {e['sha256']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
