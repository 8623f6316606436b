#!/usr/bin/env python3
"""Regenerates the bundled sample data and the oracle files derived from it.

Writes:
  data/sample_census.csv            twenty-platform sample census
  data/fixtures/                    replay fixtures for the enrich stage
  tests/oracle/summary.csv          expected ingest output
  tests/oracle/features_raw.csv     expected enrich output
  tests/oracle/fig_ever_worked_ratio.csv
  tests/oracle/fig_fulltime_ratio.csv

The oracle files are computed here independently of the C++ code; the
acceptance suite compares pipeline output against them byte-for-byte, so
the number formatting below must mirror text.cpp exactly.
"""

import os

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
DATA = os.path.join(ROOT, "data")
FIXTURES = os.path.join(DATA, "fixtures")
ORACLE = os.path.join(ROOT, "tests", "oracle")

# --- formatting mirrors of text.cpp ---------------------------------------


def shortest_digits(v):
    """(digits, exp10) with value == 0.d1d2... * 10**exp10, no trailing zeros."""
    r = repr(abs(v))
    if "e" in r:
        mant, e = r.split("e")
        e = int(e)
    else:
        mant, e = r, 0
    if "." in mant:
        int_part, frac = mant.split(".")
    else:
        int_part, frac = mant, ""
    all_digits = int_part + frac
    first = next(i for i, c in enumerate(all_digits) if c != "0")
    exp10 = len(int_part) - first + e
    digits = all_digits[first:].rstrip("0") or "0"
    return digits, exp10


def fixed_form(digits, exp10):
    if exp10 <= 0:
        return "0." + "0" * (-exp10) + digits
    if exp10 >= len(digits):
        return digits + "0" * (exp10 - len(digits))
    return digits[:exp10] + "." + digits[exp10:]


def sci_form(digits, exp10):
    e = exp10 - 1
    mant = digits[0] + ("." + digits[1:] if len(digits) > 1 else "")
    return "%se%s%02d" % (mant, "+" if e >= 0 else "-", abs(e))


def fmt_number(v):
    """Matches olm::format_number: integers print plain, otherwise the
    shortest round-trip form, scientific only when strictly shorter."""
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    # Verified to match the C++ output for |v| < 1e15 (huge integral doubles
    # format differently, but never appear in the sample data).
    assert abs(v) < 1e15, "value outside the verified formatting range"
    sign = "-" if v < 0 else ""
    digits, exp10 = shortest_digits(v)
    f = fixed_form(digits, exp10)
    s = sci_form(digits, exp10)
    return sign + (s if len(s) < len(f) else f)


def csv_field(s):
    if any(c in s for c in ',"\n\r'):
        return '"' + s.replace('"', '""') + '"'
    return s


def write_csv(path, header, rows):
    lines = [",".join(csv_field(f) for f in header)]
    for row in rows:
        lines.append(",".join(csv_field(f) for f in row))
    with open(path, "wb") as f:
        f.write(("\n".join(lines) + "\n").encode())


def fnv1a64(data):
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def percent_encode(s):
    out = []
    for b in s.encode():
        c = chr(b)
        if c.isalnum() and c.isascii() or c in "-_.~":
            out.append(c)
        else:
            out.append("%%%02X" % b)
    return "".join(out)


# --- the census ------------------------------------------------------------

# name, url, registered, ever, fulltime, alexa, uniques, tsum, tmed, source, seen
CENSUS = [
    ("taskhive", "taskhive.example", 2400000, 460000, 120000, 812, 5400000, "14", "1", "platform_page", "2016-04-02"),
    ("gigmarket", "gigmarket.example", 1100000, 230000, 61000, 1904, 2100000, "", "", "press_release", "2016-04-03"),
    ("freelanceport", "freelanceport.example", 640000, 96000, 21000, 3511, 880000, "6.91", "0.48", "platform_page", "2016-04-02"),
    ("microtaskers", "microtaskers.example", 310000, 71000, None, 7208, 420000, "", "", "api", "2016-04-05"),
    ("crowdforge", "crowdforge.example", 120000, 18000, 4200, 15400, 130000, "", "", "platform_page", "2016-04-04"),
    ("designbazaar", "designbazaar.example", 88000, None, None, None, 95000, "", "", "press_release", "2016-04-06"),
    ("codescouts", "codescouts.example", 45000, None, None, 44100, None, "1.77", "0.11", "platform_page", "2016-04-02"),
    ("penportal", "penportal.example", 22000, None, None, None, None, "", "", "archive", "2016-04-07"),
    ("translatenow", "translatenow.example", 9800, None, None, 98000, 21000, "0.4", "0.02", "platform_page", "2016-04-03"),
    ("tinytasks", "tinytasks.example", 5200, None, None, None, None, "", "", "api", "2016-04-05"),
    ("quickgigs", "quickgigs.example", 2100, None, None, 240000, 8800, "0.13", "0.008", "platform_page", "2016-04-04"),
    ("localhelpers", "localhelpers.example", 450, None, None, None, None, "", "", "archive", "2016-04-07"),
    ("skillbridge", "skillbridge.example", None, None, None, 5100, 610000, "3.4", "0.21", "platform_page", "2016-04-02"),
    ("workwave", "workwave.example", None, None, None, 12800, 240000, "", "", "press_release", "2016-04-06"),
    ("taskranger", "taskranger.example", None, None, None, None, 71000, "0.8", "0.05", "api", "2016-04-05"),
    ("gighub", "gighub.example", None, None, None, None, None, "", "", "archive", "2016-04-07"),
    ("projectpool", "projectpool.example", None, None, None, 61000, 52000, "", "", "platform_page", "2016-04-03"),
    ("remotecrafts", "remotecrafts.example", None, None, None, 175000, None, "", "", "press_release", "2016-04-06"),
    ("laborlink", "laborlink.example", None, None, None, 155000, 14000, "0.1", "0.006", "platform_page", "2016-04-04"),
    ("handyhands", "handyhands.example", None, None, None, None, None, "", "", "archive", "2016-04-07"),
]

ANCHOR = "taskhive.example"
WINDOW = ["2016-03-%02d" % d for d in range(1, 15)]

# Raw search-interest values per batch, anchor series first. Batches are
# independent requests, so the anchor's raw scale differs between them.
TRENDS_BATCHES = [
    [
        ("taskhive.example", [72, 68, 75, 70, 66, 74, 71, 69, 73, 70, 67, 72, 74, 71]),
        ("gigmarket.example", [43, 41, 45, 42, 40, 44, 43, 41, 44, 42, 40, 43, 44, 43]),
        ("microtaskers.example", [25, 24, 26, 25, 23, 26, 25, 24, 26, 24, 23, 25, 26, 25]),
        ("crowdforge.example", [14, 14, 15, 14, 13, 15, 14, 14, 15, 14, 13, 14, 15, 14]),
        ("designbazaar.example", [11, 10, 11, 11, 10, 11, 11, 10, 11, 10, 10, 11, 11, 11]),
    ],
    [
        ("taskhive.example", [88, 84, 90, 86, 0, 89, 87, 85, 90, 86, 83, 88, 90, 87]),
        ("penportal.example", [7, 7, 8, 7, 6, 7, 7, 7, 8, 7, 6, 7, 8, 7]),
        ("tinytasks.example", [4, 3, 4, 4, 3, 4, 4, 3, 4, 3, 3, 4, 4, 4]),
        ("localhelpers.example", [1, 1, 1, 1, 0, 1, 1, 1, 1, 1, 0, 1, 1, 1]),
        ("workwave.example", [22, 21, 23, 22, 20, 22, 22, 21, 23, 21, 20, 22, 23, 22]),
    ],
    [
        ("taskhive.example", [64, 61, 66, 63, 60, 65, 64, 62, 66, 63, 59, 64, 66, 63]),
        ("gighub.example", [8, 7, 8, 8, 7, 8, 8, 7, 8, 7, 7, 8, 8, 8]),
        ("projectpool.example", [5, 4, 5, 5, 4, 5, 5, 4, 5, 4, 4, 5, 5, 5]),
        ("remotecrafts.example", [3, 3, 4, 3, 3, 3, 3, 3, 4, 3, 3, 3, 4, 3]),
        ("handyhands.example", [1, 1, 2, 1, 1, 1, 1, 1, 2, 1, 1, 1, 2, 1]),
    ],
]

# Site-rank lookups for records missing alexa_rank or monthly_uniques.
# Census values win over these when both exist; absent keys stay absent.
SITERANK = {
    "designbazaar.example": {"alexa_rank": 21500, "monthly_uniques": 180000},
    "codescouts.example": {"monthly_uniques": 61000},
    "penportal.example": {"alexa_rank": 87000, "monthly_uniques": 30000},
    "tinytasks.example": {"alexa_rank": 310000},
    "localhelpers.example": {"alexa_rank": 890000, "monthly_uniques": 2100},
    "taskranger.example": {"alexa_rank": 52000},
    "gighub.example": {"alexa_rank": 130000, "monthly_uniques": 24000},
    "remotecrafts.example": {"monthly_uniques": 18000},
    "handyhands.example": {"alexa_rank": 640000},
}

CAPTURED = "2016-04-08"


def write_census():
    header = ("name,url,registered_count,ever_worked_count,fulltime_count,"
              "alexa_rank,monthly_uniques,trends_sum,trends_median,source,observed_at")
    lines = [
        "# source = sample platform census assembled for the bundled demo run",
        "# collected = 2016-04-08",
        header,
    ]
    for row in CENSUS:
        name, url, reg, ever, ft, alexa, uniq, tsum, tmed, source, seen = row
        opt = lambda v: "" if v is None else str(v)
        lines.append(",".join([name, url, opt(reg), opt(ever), opt(ft), opt(alexa),
                               opt(uniq), tsum, tmed, source, seen]))
    with open(os.path.join(DATA, "sample_census.csv"), "wb") as f:
        f.write(("\n".join(lines) + "\n").encode())


def write_fixtures():
    os.makedirs(FIXTURES, exist_ok=True)
    entries = []

    def record(canonical, body):
        h = fnv1a64(canonical.encode())
        entries.append("%016x\t%s\t%s" % (h, CAPTURED, canonical))
        with open(os.path.join(FIXTURES, "%016x.body" % h), "wb") as f:
            f.write(body.encode())

    for batch in TRENDS_BATCHES:
        terms = ",".join(site for site, _ in batch)
        canonical = "trends?start=%s&end=%s&terms=%s" % (
            WINDOW[0], WINDOW[-1], percent_encode(terms))
        lines = ["date,term,value"]
        for site, values in batch:
            for date, v in zip(WINDOW, values):
                lines.append("%s,%s,%d" % (date, site, v))
        record(canonical, "\n".join(lines) + "\n")

    for site, fields in SITERANK.items():
        canonical = "siterank?url=" + percent_encode(site)
        body = "".join("%s = %d\n" % (k, v) for k, v in fields.items())
        record(canonical, body)

    with open(os.path.join(FIXTURES, "index.txt"), "wb") as f:
        f.write(("\n".join(entries) + "\n").encode())


def summarize(values):
    n = len(values)
    s = 0.0
    for v in values:
        s += v
    mean = s / n
    vs = sorted(values)
    median = vs[n // 2] if n % 2 == 1 else (vs[n // 2 - 1] + vs[n // 2]) / 2.0
    return n, mean, median, vs[0], vs[-1]


def write_summary_oracle():
    rows = []

    def stats_row(field, bucket, values):
        if not values:
            rows.append([field, bucket, "0", "", "", "", ""])
            return
        n, mean, median, lo, hi = summarize([float(v) for v in values])
        rows.append([field, bucket, str(n), fmt_number(mean), fmt_number(median),
                     fmt_number(lo), fmt_number(hi)])

    registered = [r[2] for r in CENSUS if r[2] is not None]
    stats_row("registered_count", "total", registered)
    buckets = [("<10k", 0, 10**4), ("10k-100k", 10**4, 10**5), ("100k-1m", 10**5, 10**6),
               ("1m-10m", 10**6, 10**7), (">10m", 10**7, None)]
    for label, lo, hi in buckets:
        vals = [v for v in registered if v >= lo and (hi is None or v < hi)]
        stats_row("registered_count", label, vals)
    for field, idx in [("alexa_rank", 5), ("monthly_uniques", 6), ("trends_sum", 7),
                       ("trends_median", 8), ("ever_worked_count", 3),
                       ("fulltime_count", 4)]:
        vals = [r[idx] for r in CENSUS if r[idx] not in (None, "")]
        vals = [float(v) for v in vals]
        stats_row(field, "total", vals)

    write_csv(os.path.join(ORACLE, "summary.csv"),
              ["field", "bucket", "n", "mean", "median", "min", "max"], rows)


def enriched_features():
    """Post-enrichment feature values per record, census order."""
    ratios = {}
    for batch in TRENDS_BATCHES:
        anchor_values = dict(batch)[ANCHOR]
        for site, values in batch:
            if site in ratios:
                continue  # first batch's anchor copy wins
            ratios[site] = [
                (v / a if a != 0 else 0.0) for v, a in zip(values, anchor_values)
            ]

    enriched = []
    for row in CENSUS:
        name, url, reg, ever, ft, alexa, uniq, tsum, tmed, source, seen = row
        sr = SITERANK.get(url, {})
        if alexa is None:
            alexa = sr.get("alexa_rank")
        if uniq is None:
            uniq = sr.get("monthly_uniques")
        if tsum == "":
            series = ratios[url]
            s = 0.0
            for v in series:
                s += v
            vs = sorted(series)
            n = len(vs)
            med = vs[n // 2] if n % 2 == 1 else (vs[n // 2 - 1] + vs[n // 2]) / 2.0
            tsum, tmed = s, med
        else:
            tsum, tmed = float(tsum), float(tmed)
        enriched.append((name, alexa, uniq, tsum, tmed))

    max_alexa = max(a for _, a, _, _, _ in enriched if a is not None)
    out = []
    for name, alexa, uniq, tsum, tmed in enriched:
        out.append((name,
                    float(alexa) if alexa is not None else float(max_alexa),
                    float(uniq) if uniq is not None else 0.0,
                    tsum, tmed))
    return out


def write_features_oracle():
    rows = [[name, fmt_number(a), fmt_number(u), fmt_number(ts), fmt_number(tm)]
            for name, a, u, ts, tm in enriched_features()]
    write_csv(os.path.join(ORACLE, "features_raw.csv"),
              ["name", "alexa_rank", "monthly_uniques", "trends_sum", "trends_median"],
              rows)


def write_ratio_oracles():
    for fname, idx in [("fig_ever_worked_ratio.csv", 3), ("fig_fulltime_ratio.csv", 4)]:
        rows = []
        ratios = []
        for r in CENSUS:
            reg, numerator = r[2], r[idx]
            if reg is None or reg <= 0 or numerator is None:
                continue
            ratio = float(numerator) / float(reg)
            ratios.append(ratio)
            rows.append(["platform", r[0], fmt_number(ratio)])
        s = 0.0
        for v in ratios:
            s += v
        rows.append(["mean", "", fmt_number(s / len(ratios))])
        write_csv(os.path.join(ORACLE, fname), ["record", "name", "value"], rows)


def main():
    os.makedirs(DATA, exist_ok=True)
    os.makedirs(ORACLE, exist_ok=True)
    write_census()
    write_fixtures()
    write_summary_oracle()
    write_features_oracle()
    write_ratio_oracles()
    print("sample data and oracles written under", DATA, "and", ORACLE)


if __name__ == "__main__":
    main()
