"""Re-encode the categorical German credit file as 24 integer columns plus label.

Usage: python3 tools/make_german_numeric.py german.data data/german.data-numeric

Columns (all integers, whitespace separated):
  1-13  categorical attributes as their ordinal code (A11 -> 1, A34 -> 4, A410 -> 10, ...):
        status, credit_history, purpose, savings, employment, status_sex,
        other_debtors, property, other_installments, housing, job, telephone,
        foreign_worker
  14-20 numeric attributes: duration, amount, installment_rate, residence,
        age, existing_credits, people_liable
  21-24 purpose indicators: new car, used car, furniture/equipment, radio/television
  25    label (1 good, 2 bad)
"""

import sys

CATEGORICAL = [0, 2, 3, 5, 6, 8, 9, 11, 13, 14, 16, 18, 19]
NUMERIC = [1, 4, 7, 10, 12, 15, 17]
PURPOSE_INDICATORS = ["A40", "A41", "A42", "A43"]


def ordinal(code: str, attribute: int) -> int:
    # codes are A<attribute><value>
    prefix = f"A{attribute}"
    if not code.startswith(prefix):
        raise ValueError(f"code {code!r} does not belong to attribute {attribute}")
    return int(code[len(prefix):])


def convert(line: str) -> str:
    tok = line.split()
    if len(tok) != 21:
        raise ValueError(f"expected 21 fields, got {len(tok)}: {line!r}")
    row = [ordinal(tok[i], i + 1) for i in CATEGORICAL]
    row += [int(tok[i]) for i in NUMERIC]
    row += [int(tok[3] == p) for p in PURPOSE_INDICATORS]
    row.append(int(tok[20]))
    return " ".join(f"{v:4d}" for v in row)


def main() -> None:
    src, dst = sys.argv[1], sys.argv[2]
    with open(src) as f:
        lines = [ln for ln in f if ln.strip()]
    with open(dst, "w") as f:
        for ln in lines:
            f.write(convert(ln) + "\n")


if __name__ == "__main__":
    main()
