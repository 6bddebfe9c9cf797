"""JSON and CSV serialization of deviation reports, and cross-run merging."""
from __future__ import annotations

import csv
import io
import json
import math

from .errors import FingerprintMismatch
from .theorems import DeviationReport, reference_gap

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["identity_id", "scale", "machine_fingerprint", "stats", "coverage", "items"],
    "properties": {
        "identity_id": {"type": "string"},
        "variant": {"type": ["string", "null"]},
        "scale": {
            "type": "object",
            "required": ["L", "P", "T"],
            "properties": {
                "L": {"type": ["integer", "null"]},
                "P": {"type": "integer"},
                "T": {"type": "integer"},
            },
        },
        "machine_fingerprint": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
        "codec_version": {"type": "integer"},
        "stats": {
            "oneOf": [
                {"type": "null"},
                {
                    "type": "object",
                    "required": ["min", "max", "mean"],
                    "properties": {k: {"type": "number"} for k in ("min", "max", "mean")},
                },
            ]
        },
        "coverage": {"type": "number", "minimum": 0, "maximum": 1},
        "items": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id"],
                "properties": {
                    "id": {"type": "string"},
                    "deviation": {"type": "number"},
                    "excluded_reason": {"type": "string"},
                },
                "oneOf": [{"required": ["deviation"]}, {"required": ["excluded_reason"]}],
            },
        },
    },
}

CSV_COLUMNS = ("identity_id", "variant", "L", "P", "T", "machine_fingerprint", "min", "max",
               "mean", "coverage", "id", "deviation", "excluded_reason")


def _clean(v):
    if isinstance(v, float) and math.isinf(v):
        return None
    if isinstance(v, tuple):
        return [_clean(x) for x in v]
    if isinstance(v, list):
        return [_clean(x) for x in v]
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    return v


def report_to_dict(report: DeviationReport, bound=None) -> dict:
    items = []
    for it in report.items:
        d = {"id": it.id}
        if it.included:
            d["deviation"] = it.deviation
        else:
            d["excluded_reason"] = it.excluded_reason
        if it.extra:
            d["extra"] = _clean(it.extra)
        items.append(d)
    out = {
        "identity_id": report.identity_id,
        "variant": report.variant,
        "scale": _clean(report.scale),
        "machine_fingerprint": report.machine_fingerprint,
        "codec_version": report.codec_version,
        "stats": report.stats,
        "coverage": report.coverage,
        "items": items,
    }
    if report.summary:
        out["summary"] = _clean({str(k): v for k, v in report.summary.items()})
    if bound is not None:
        out["pinned_bound"] = bound
    return out


def to_json(reports, bounds=None) -> str:
    bounds = bounds or {}
    docs = [report_to_dict(r, bounds.get((r.identity_id, r.variant))) for r in reports]
    return json.dumps(docs, indent=1, ensure_ascii=False)


def to_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in reports:
        s = r.stats or {}
        head = [r.identity_id, r.variant or "", r.scale.get("L"), r.scale["P"], r.scale["T"],
                r.machine_fingerprint, s.get("min", ""), s.get("max", ""), s.get("mean", ""),
                r.coverage]
        for it in r.items:
            w.writerow(head + [it.id, "" if it.deviation is None else it.deviation,
                               it.excluded_reason or ""])
    return buf.getvalue()


def _scale_key(scale: dict) -> str:
    return ",".join(f"{k}={scale[k]}" for k in ("L", "P", "T"))


def merge_reports(documents) -> dict:
    """Merge report documents into one keyed by identity and scale.

    Every document is a report object or a list of them.  All reports must
    share one machine fingerprint.  Counterexample rows are collected into a
    trend table with one row per n (later files win on duplicates).
    """
    reports = []
    for doc in documents:
        reports.extend(doc if isinstance(doc, list) else [doc])
    fps = {r["machine_fingerprint"] for r in reports}
    if len(fps) > 1:
        raise FingerprintMismatch(f"reports come from {len(fps)} different machines")
    merged: dict = {"machine_fingerprint": fps.pop() if fps else None, "reports": {}, "trends": {}}
    trend: dict[int, dict] = {}
    for r in reports:
        ident = r["identity_id"] + (f"/{r['variant']}" if r.get("variant") else "")
        merged["reports"].setdefault(ident, {})[_scale_key(r["scale"])] = r
        if r["identity_id"] == "COUNTEREX":
            for it in r["items"]:
                n = int(it["id"].split("=")[1])
                row = {"n": n, "gap": it.get("deviation"), "excluded_reason": it.get("excluded_reason"),
                       "reference": reference_gap(n),
                       "P": r["scale"]["P"], "T": r["scale"]["T"]}
                trend[n] = row
    if trend:
        merged["trends"]["COUNTEREX"] = [trend[n] for n in sorted(trend)]
    return merged
