"""Fetch the Wine (red) and Concrete regression datasets into data/.

Each dataset is written as a plain CSV with a header row and the target in
the last column.  Sources are tried in order; the first that works wins:

  wine:     UCI archive, then the copy bundled with the ``linfa-datasets``
            crate (``cargo add linfa-datasets --features winequality``)
  concrete: UCI archive (xls), then the ``modeldata`` copy served by the
            ``rdatasets`` pip package

Usage: python3 scripts/fetch_uci.py [--out data] [--wine-file PATH] [--concrete-file PATH]
"""
import argparse
import glob
import gzip
import io
import os
import sys
import urllib.request

import numpy as np

UCI = "https://archive.ics.uci.edu/ml/machine-learning-databases"
WINE_URL = f"{UCI}/wine-quality/winequality-red.csv"
CONCRETE_URL = f"{UCI}/concrete/compressive/Concrete_Data.xls"
CONCRETE_COLS = ["cement", "blast_furnace_slag", "fly_ash", "water", "superplasticizer",
                 "coarse_aggregate", "fine_aggregate", "age", "compressive_strength"]


def _get(url, timeout=20):
    with urllib.request.urlopen(url, timeout=timeout) as r:
        return r.read()


def _wine_table(text):
    lines = [ln for ln in text.strip().splitlines() if ln]
    header = [h.strip().strip('"').replace(" ", "_") for h in lines[0].split(";")]
    rows = np.array([[float(v) for v in ln.split(";")] for ln in lines[1:]])
    return header, rows


def wine_sources():
    yield "uci", lambda: _wine_table(_get(WINE_URL).decode())
    home = os.environ.get("CARGO_HOME", os.path.expanduser("~/.cargo"))
    for root in (home, "/opt/cargo"):
        for path in sorted(glob.glob(f"{root}/registry/src/*/linfa-datasets-*/data/winequality-red.csv.gz")):
            yield path, lambda p=path: _wine_table(gzip.open(p, "rt").read().replace(",", ";"))


def concrete_sources():
    def uci():
        import pandas as pd
        df = pd.read_excel(io.BytesIO(_get(CONCRETE_URL)))
        return CONCRETE_COLS, df.to_numpy(float)

    def rdata():
        import rdatasets
        df = rdatasets.data("modeldata", "concrete")
        df = df.drop(columns=[c for c in df.columns if c == "rownames"])
        return list(df.columns), df.to_numpy(float)

    yield "uci", uci
    yield "rdatasets:modeldata/concrete", rdata


def _from_file(path):
    opener = gzip.open if path.endswith(".gz") else open
    with opener(path, "rt") as f:
        text = f.read()
    sep = ";" if text.splitlines()[0].count(";") > text.splitlines()[0].count(",") else ","
    return _wine_table(text.replace(sep, ";") if sep == "," else text)


def fetch(name, sources, out, expect_rows):
    for label, load in sources:
        try:
            header, rows = load()
        except Exception as e:  # noqa: BLE001 - try the next source
            print(f"{name}: {label} failed ({type(e).__name__}: {e})", file=sys.stderr)
            continue
        if rows.shape[0] != expect_rows:
            print(f"{name}: {label} gave {rows.shape[0]} rows, expected {expect_rows}", file=sys.stderr)
            continue
        path = os.path.join(out, f"{name}.csv")
        np.savetxt(path, rows, delimiter=",", header=",".join(header), comments="", fmt="%.10g")
        print(f"{name}: {rows.shape[0]} rows x {rows.shape[1]} cols from {label} -> {path}")
        return path
    raise SystemExit(f"{name}: no source worked")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data"))
    ap.add_argument("--wine-file", help="local winequality-red.csv(.gz) to use instead")
    ap.add_argument("--concrete-file", help="local concrete CSV (target last) to use instead")
    args = ap.parse_args(argv)
    os.makedirs(args.out, exist_ok=True)
    wine = [("file", lambda: _from_file(args.wine_file))] if args.wine_file else wine_sources()
    conc = [("file", lambda: _from_file(args.concrete_file))] if args.concrete_file else concrete_sources()
    fetch("wine", wine, args.out, 1599)
    fetch("concrete", conc, args.out, 1030)


if __name__ == "__main__":
    main()
