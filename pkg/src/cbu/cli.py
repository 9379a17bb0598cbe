"""Command-line entry point: ``cbu <subcommand> [flags]``.

Settings come from a plain ``key = value`` config file (``--config``) with
command-line flags taking precedence.  Every subcommand writes its outputs
and a manifest under ``--out``.

Exit codes: 0 ok, 2 configuration error, 3 backend error, 4 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, templates
from . import metrics as M
from .curation import CandidateQuestion, curate
from .errors import BackendError, CBUError, ConfigError, DataError, ParseError
from .gateway import BackendConfig, Gateway, HttpBackend, MockBackend, MockScript, SamplingParams
from .model import Candidate, Problem, ScoreRecord, group_problems, pools_from_candidates, validate_pool
from .report import build_report, method_key, split_by_method
from .scoring import (DEFAULT_T, DIFFICULTY_K, difficulty, estimate_solvability, score_cbu_pool,
                      score_genrm_pool, score_judge_pool)
from .stats import (BOOTSTRAP_NS, BOOTSTRAP_RESAMPLES, JUDGE_SCALE, RolloutPool, bootstrap_error, fit_probe,
                    probe_accuracy, prompt_sensitivity)
from .store import RolloutStore, RunManifest, dump_json, export_report, read_jsonl, write_jsonl, write_manifest
from .verdicts import SCALES, SCHEME_TEMPLATE, parse_error_audit

log = logging.getLogger("cbu")

EXIT_CONFIG, EXIT_BACKEND, EXIT_DATA = 2, 3, 4
SUBCOMMANDS = ("ingest", "rollout", "score-cbu", "score-judge", "metrics", "bootstrap", "regress", "curate",
               "audit", "report", "synth")


# -- configuration ----------------------------------------------------------
def read_config(path) -> dict:
    out = {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {p} not found")
    for n, line in enumerate(p.read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{p}:{n}: expected 'key = value'")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


_BOOL = {"1": True, "true": True, "yes": True, "on": True, "0": False, "false": False, "no": False, "off": False}


@dataclass
class Settings:
    raw: dict

    def get(self, key, default=None):
        v = self.raw.get(key)
        return default if v is None or v == "" else v

    def int(self, key, default=None) -> Optional[int]:
        v = self.get(key)
        if v is None:
            return default
        try:
            return int(v)
        except (TypeError, ValueError):
            raise ConfigError(f"{key} must be an integer, got {v!r}") from None

    def float(self, key, default=None) -> Optional[float]:
        v = self.get(key)
        if v is None:
            return default
        try:
            return float(v)
        except (TypeError, ValueError):
            raise ConfigError(f"{key} must be a number, got {v!r}") from None

    def bool(self, key, default=False) -> bool:
        v = self.get(key)
        if v is None:
            return default
        if isinstance(v, bool):
            return v
        if str(v).lower() not in _BOOL:
            raise ConfigError(f"{key} must be a boolean, got {v!r}")
        return _BOOL[str(v).lower()]

    def ints(self, key, default) -> list[int]:
        v = self.get(key)
        if v is None:
            return list(default)
        if isinstance(v, (list, tuple)):
            return [int(x) for x in v]
        try:
            return [int(x) for x in str(v).replace(",", " ").split()]
        except ValueError:
            raise ConfigError(f"{key} must be a list of integers, got {v!r}") from None

    def words(self, key, default=()) -> list[str]:
        v = self.get(key)
        if v is None:
            return list(default)
        if isinstance(v, (list, tuple)):
            return list(v)
        return [w for w in str(v).replace(",", " ").split() if w]

    def path(self, key, must_exist=True) -> Path:
        v = self.get(key)
        if v is None:
            raise ConfigError(f"missing required setting {key!r}")
        p = Path(v)
        if must_exist and not p.exists():
            raise ConfigError(f"{key}: {p} does not exist")
        return p


def resolve_settings(args: argparse.Namespace) -> Settings:
    raw = read_config(args.config) if args.config else {}
    for key, value in vars(args).items():
        if key in ("config", "command", "func", "verbose"):
            continue
        if value is not None:
            raw[key] = value
    s = Settings(raw)
    s.raw.setdefault("out", "cbu-out")
    if s.get("scheme", "ten_point") not in SCALES:
        raise ConfigError(f"scheme must be one of {sorted(SCALES)}")
    if s.get("tie_mode", "expected") not in M.TIE_MODES:
        raise ConfigError(f"tie_mode must be one of {M.TIE_MODES}")
    if s.get("bootstrap_mode", "replacement") not in ("replacement", "subsample"):
        raise ConfigError("bootstrap_mode must be 'replacement' or 'subsample'")
    proto = s.get("probe_protocol", "k_fold:5")
    if proto != "in_sample" and not str(proto).startswith("k_fold"):
        raise ConfigError("probe_protocol must be 'in_sample' or 'k_fold:<k>'")
    t = s.int("T", DEFAULT_T)
    if t < 1:
        raise ConfigError("T must be >= 1")
    return s


# -- wiring -----------------------------------------------------------------
def out_dir(s: Settings) -> Path:
    p = Path(s.get("out"))
    p.mkdir(parents=True, exist_ok=True)
    return p


def build_gateway(s: Settings, store=None):
    """Returns (gateway, backend_id, sampling, manifest backend entry)."""
    kind = s.get("backend", "mock")
    gw = Gateway(cache=store)
    max_tokens = s.int("max_new_tokens", 16384)
    if kind == "mock":
        script = MockScript.load(s.path("mock_script"))
        if s.get("seed") is not None:
            script = MockScript(script.rules, s.int("seed"))
        backend_id = "mock"
        gw.register(backend_id, MockBackend(script), s.int("max_in_flight", 8))
        sampling = SamplingParams(s.float("temperature", 1.0), max_tokens, None)
        entry = {"kind": "mock", "script": str(s.get("mock_script")), "seed": script.seed}
    elif kind == "http":
        temperature = s.float("temperature")
        if temperature is None:
            raise ConfigError("http backends need an explicit temperature")
        cfg = BackendConfig(
            endpoint=s.get("endpoint") or _missing("endpoint"),
            model_name=s.get("model") or _missing("model"),
            max_in_flight=s.int("max_in_flight", 8),
            max_attempts=s.int("max_attempts", 4),
            backoff_base_ms=s.int("backoff_base_ms", 500),
            timeout_ms=s.int("timeout_ms", 600_000),
            temperature=temperature,
        )
        backend_id = f"http:{cfg.model_name}"
        gw.register(backend_id, HttpBackend(cfg), cfg.max_in_flight)
        sampling = SamplingParams(temperature, max_tokens, s.int("seed"))
        entry = {"kind": "http", **cfg.to_dict()}
    else:
        raise ConfigError(f"unknown backend {kind!r} (expected 'mock' or 'http')")
    return gw, backend_id, sampling, {backend_id: entry}


def _missing(key):
    raise ConfigError(f"missing required setting {key!r}")


def load_dataset(s: Settings, need_candidates=True):
    root = s.path("dataset")
    problems = read_jsonl(root / "problems.jsonl", Problem)
    ids = [p.id for p in problems]
    if len(ids) != len(set(ids)):
        raise DataError("duplicate problem ids in problems.jsonl")
    candidates = []
    cpath = root / "candidates.jsonl"
    if cpath.exists():
        candidates = read_jsonl(cpath, Candidate)
    elif need_candidates:
        raise ConfigError(f"{cpath} not found")
    return problems, candidates


def _flags(s: Settings) -> dict:
    return {
        "scheme": s.get("scheme", "ten_point"),
        "tie_mode": s.get("tie_mode", "expected"),
        "bootstrap_mode": s.get("bootstrap_mode", "replacement"),
        "probe_protocol": s.get("probe_protocol", "k_fold:5"),
        "strict_pool": s.bool("strict_pool"),
        "include_human": s.bool("include_human"),
        "boxed_literal": templates.BOXED_LITERAL,
    }


def manifest(s: Settings, command: str, backends=None, T=None, inputs=None, digests=()) -> Path:
    m = RunManifest(
        command=command,
        backends=backends or {},
        template_digests={t: templates.load(t).digest for t in digests},
        T=T,
        seeds={"seed": s.int("seed")},
        flags=_flags(s),
        inputs=inputs or {},
    )
    return write_manifest(out_dir(s), m)


def merge_scores(path: Path, new_records, replace_key) -> list[ScoreRecord]:
    """Replace records of one method key in scores.jsonl, keeping the rest; stable order."""
    old = read_jsonl(path, ScoreRecord) if path.exists() else []
    keep = [r for r in old if method_key(r) != replace_key]
    merged = sorted(keep + list(new_records), key=lambda r: (method_key(r), r.candidate_id))
    write_jsonl(path, merged)
    return merged


def _pools(problems, candidates):
    pools = pools_from_candidates(candidates)
    known = {p.id for p in problems}
    stray = sorted(set(pools) - known)
    if stray:
        raise DataError(f"candidates reference unknown problems {stray}")
    return pools


# -- subcommands ------------------------------------------------------------
def cmd_ingest(s: Settings) -> int:
    problems, candidates = load_dataset(s)
    pools = _pools(problems, candidates)
    strict = s.bool("strict_pool")
    problems_without_hoods = [p.id for p in problems if not p.neighborhoods]
    violations = {pid: [v.__dict__ for v in validate_pool(pool, strict)] for pid, pool in pools.items()}
    violations = {k: v for k, v in violations.items() if v}
    out = out_dir(s)
    dest = out / "dataset"
    dest.mkdir(exist_ok=True)
    write_jsonl(dest / "problems.jsonl", sorted(problems, key=lambda p: p.id))
    write_jsonl(dest / "candidates.jsonl", sorted(candidates, key=lambda c: (c.problem_id, c.id)))
    summary = {
        "problems": len(problems),
        "groups": len(group_problems(problems)),
        "candidates": len(candidates),
        "pools": len(pools),
        "problems_without_neighborhoods": problems_without_hoods,
        "violations": violations,
    }
    (out / "ingest.json").write_text(dump_json(summary), encoding="utf-8")
    manifest(s, "ingest", inputs={"dataset": str(s.get("dataset"))})
    print(f"ingested {len(problems)} problems, {len(candidates)} candidates, {len(violations)} pool(s) with violations")
    if violations:
        for pid, vs in violations.items():
            for v in vs:
                print(f"  {pid}: {v['message']}", file=sys.stderr)
        return EXIT_DATA
    return 0


def cmd_rollout(s: Settings) -> int:
    problems, _ = load_dataset(s, need_candidates=False)
    out = out_dir(s)
    store = RolloutStore(out)
    gw, bid, sampling, backends = build_gateway(s, store)
    k = s.int("k", DIFFICULTY_K)
    rows = []
    for p in problems:
        est = estimate_solvability(gw, p, k, backend_id=bid, sampling=sampling, store=store)
        rows.append({**est.to_dict(), "difficulty": difficulty(est)})
    (out / "solvability.jsonl").write_text("".join(json.dumps(r, separators=(",", ":")) + "\n" for r in rows),
                                           encoding="utf-8")
    manifest(s, "rollout", backends, inputs={"dataset": str(s.get("dataset")), "k": k})
    print(f"solvability for {len(rows)} problems (k={k}); backend calls {gw.stats.calls}, cache hits {gw.stats.cache_hits}")
    return 0


def _write_units(out: Path, method: str, rows: list[dict]):
    path = out / "units.jsonl"
    old = []
    if path.exists():
        old = [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
    keep = [r for r in old if r["method"] != method]
    merged = sorted(keep + rows, key=lambda r: (r["method"], r["candidate_id"], r.get("neighborhood_id", "")))
    path.write_text("".join(json.dumps(r, separators=(",", ":")) + "\n" for r in merged), encoding="utf-8")


def cmd_score_cbu(s: Settings) -> int:
    problems, candidates = load_dataset(s)
    pools = _pools(problems, candidates)
    out = out_dir(s)
    store = RolloutStore(out)
    gw, bid, sampling, backends = build_gateway(s, store)
    T = s.int("T", DEFAULT_T)
    records, units, missing = [], [], []
    for p in problems:
        pool = pools.get(p.id)
        if pool is None:
            continue
        if not p.neighborhoods:
            raise DataError(f"problem {p.id!r} has no neighborhood questions")
        for est in score_cbu_pool(gw, p, pool.candidates, T, backend_id=bid, sampling=sampling, store=store):
            rec = est.to_score_record()
            if rec is None:
                missing.append(est.candidate_id)
            else:
                records.append(rec)
            units.extend({"method": "cbu", "candidate_id": est.candidate_id, "neighborhood_id": c.neighborhood_id,
                          "scale": [0.0, 1.0], "units": list(c.verdicts)} for c in est.per_neighborhood)
    _require_some(records, gw)
    merge_scores(out / "scores.jsonl", records, "cbu")
    _write_units(out, "cbu", units)
    manifest(s, "score-cbu", backends, T, {"dataset": str(s.get("dataset"))}, digests=("cbu",))
    print(f"scored {len(records)} candidates with CBU (T={T}); backend calls {gw.stats.calls}, "
          f"cache hits {gw.stats.cache_hits}")
    if missing:
        log.warning("no successful rollouts for %s", missing)
    return 0


def cmd_score_judge(s: Settings) -> int:
    problems, candidates = load_dataset(s)
    pools = _pools(problems, candidates)
    out = out_dir(s)
    store = RolloutStore(out)
    gw, bid, sampling, backends = build_gateway(s, store)
    T = s.int("T", DEFAULT_T)
    scheme = s.get("scheme", "ten_point")
    method = s.get("method", "judge")
    records, units = [], []
    for p in problems:
        pool = pools.get(p.id)
        if pool is None:
            continue
        if method == "genrm_adapter":
            lo, hi = s.float("score_min", 0.0), s.float("score_max", 10.0)
            recs = score_genrm_pool(gw, p, pool.candidates, (lo, hi), T, backend_id=bid, sampling=sampling,
                                    store=store, pattern=s.get("score_pattern"))
            records.extend(r for r in recs if r is not None)
            continue
        for tally in score_judge_pool(gw, p, pool.candidates, scheme, T, backend_id=bid, sampling=sampling,
                                      store=store):
            rec = tally.to_score_record()
            if rec is not None:
                records.append(rec)
            lo, hi = SCALES[scheme]
            units.append({"method": f"judge:{scheme}", "candidate_id": tally.candidate_id,
                          "scale": [float(lo), float(hi)], "units": list(tally.scores)})
    _require_some(records, gw)
    key = "genrm_adapter" if method == "genrm_adapter" else f"judge:{scheme}"
    merge_scores(out / "scores.jsonl", records, key)
    if units:
        _write_units(out, key, units)
    tpl = SCHEME_TEMPLATE[scheme] if method != "genrm_adapter" else "judge_default"
    manifest(s, "score-judge", backends, T, {"dataset": str(s.get("dataset")), "method": key}, digests=(tpl,))
    print(f"scored {len(records)} candidates with {key} (T={T}); backend calls {gw.stats.calls}, "
          f"cache hits {gw.stats.cache_hits}")
    return 0


def _require_some(records, gw):
    if not records and gw.stats.calls:
        raise BackendError("no rollout produced a usable score", gw.stats.calls)


def _load_scores(out: Path) -> list[ScoreRecord]:
    path = out / "scores.jsonl"
    if not path.exists():
        raise ConfigError(f"{path} not found; run score-cbu or score-judge first")
    return read_jsonl(path, ScoreRecord)


def _load_difficulties(out: Path) -> dict:
    path = out / "solvability.jsonl"
    if not path.exists():
        return {}
    rows = [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
    return {r["question_id"]: r["difficulty"] for r in rows}


def cmd_metrics(s: Settings, full=False) -> int:
    problems, candidates = load_dataset(s)
    pools = _pools(problems, candidates)
    out = out_dir(s)
    records = _load_scores(out)
    extra = {}
    if full:
        for name in ("bootstrap", "probe", "audit"):
            p = out / f"{name}.json"
            if p.exists():
                extra[name] = json.loads(p.read_text(encoding="utf-8"))
        extra["prompt_sensitivity"] = _prompt_sensitivity(records)
    methods = s.words("method") if not full else None
    rep = build_report(problems, pools, records, include_human=s.bool("include_human"),
                       tie_mode=s.get("tie_mode", "expected"),
                       difficulties=_load_difficulties(out) if full else None, bins=s.int("bins", 10),
                       extra=extra, methods=methods or None)
    export_report(rep, out / "report.json")
    manifest(s, "report" if full else "metrics", inputs={"dataset": str(s.get("dataset"))})
    for key, sec in rep.methods.items():
        agg = sec.aggregate
        cells = "  ".join(f"{m}={'n/a' if agg[m] is None else f'{100 * float(agg[m]):.2f}'}" for m in M.METRICS)
        print(f"{key:<22} {cells}")
    return 0


def _prompt_sensitivity(records) -> dict:
    by_scheme = {}
    for key, recs in split_by_method(records).items():
        if key.startswith("judge:"):
            by_scheme[key] = {r.candidate_id: r.value for r in recs}
    return prompt_sensitivity(by_scheme) if len(by_scheme) > 1 else {}


def cmd_bootstrap(s: Settings) -> int:
    out = out_dir(s)
    path = Path(s.get("units") or out / "units.jsonl")
    if not path.exists():
        raise ConfigError(f"{path} not found; score first or pass --units")
    rows = [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
    ns = s.ints("n_values", BOOTSTRAP_NS)
    resamples = s.int("resamples", BOOTSTRAP_RESAMPLES)
    replacement = s.get("bootstrap_mode", "replacement") == "replacement"
    seed = s.int("seed", 0)
    by_method: dict[str, list] = {}
    for i, r in enumerate(rows):
        if not r["units"]:
            continue
        pool = RolloutPool(np.asarray(r["units"], dtype=float), tuple(r.get("scale", (0.0, 1.0))))
        usable = [n for n in ns if replacement or n <= pool.unit_scores.size]
        curve = bootstrap_error(pool, usable, resamples, replacement, seed + i)
        by_method.setdefault(r["method"], []).append({p.n: p.mean_normalized_error for p in curve.points})
    result = {"replacement": replacement, "resamples": resamples, "seed": seed, "methods": {}}
    for method in sorted(by_method):
        curves = by_method[method]
        points = []
        for n in ns:
            vals = [c[n] for c in curves if n in c]
            if vals:
                points.append({"n": n, "mean_normalized_error": float(np.mean(vals)), "pools": len(vals),
                               "resamples": resamples})
        result["methods"][method] = points
    (out / "bootstrap.json").write_text(dump_json(result), encoding="utf-8")
    manifest(s, "bootstrap", inputs={"units": str(path), "n_values": ns, "resamples": resamples})
    for method, points in result["methods"].items():
        print(method, " ".join(f"n={p['n']}:{p['mean_normalized_error']:.4f}" for p in points))
    return 0


FEATURE_CODES = {"genrm_adapter": "G", "judge:ten_point": "J", "cbu": "U"}


def cmd_regress(s: Settings) -> int:
    problems, candidates = load_dataset(s)
    out = out_dir(s)
    records = _load_scores(out)
    by_method = {k: {r.candidate_id: r.value for r in v} for k, v in split_by_method(records).items()}
    codes = {FEATURE_CODES.get(k, k): k for k in by_method}
    include_human = s.bool("include_human")
    labeled = [c for c in candidates if c.label is not None and (include_human or not c.is_human)]
    reg = s.float("regularization", 1e-4)
    proto = s.get("probe_protocol", "k_fold:5")
    order = [c for c in ("G", "J", "U") if c in codes] + sorted(c for c in codes if c not in ("G", "J", "U"))
    configs = [(c,) for c in order]
    if "J" in codes and "U" in codes:
        configs.append(("J", "U"))
    if len(order) > 1 and tuple(order) not in configs:
        configs.append(tuple(order))
    rows = []
    for cfg in configs:
        cols = [codes[c] for c in cfg]
        usable = [c for c in labeled if all(c.id in by_method[k] for k in cols)]
        X = np.array([[by_method[k][c.id] for k in cols] for c in usable], dtype=float)
        y = np.array([c.label == "correct" for c in usable], dtype=float)
        row = {"features": "+".join(cfg), "columns": cols, "n": len(usable)}
        if len(usable) < 2 or y.min() == y.max():
            row["reason"] = "need labeled samples of both classes"
            rows.append(row)
            continue
        model = fit_probe(X, y, reg, cols)
        row["in_sample_accuracy"] = probe_accuracy(model, X, y, "in_sample")
        k_proto = proto if proto != "in_sample" else "k_fold:5"
        row["cv_accuracy"] = probe_accuracy(model, X, y, k_proto, seed=s.int("seed", 0))
        row["cv_protocol"] = k_proto
        row["model"] = model.to_dict()
        rows.append(row)
    result = {"primary_protocol": proto, "regularization": reg, "rows": rows}
    (out / "probe.json").write_text(dump_json(result), encoding="utf-8")
    manifest(s, "regress", inputs={"dataset": str(s.get("dataset"))})
    for r in rows:
        if "reason" in r:
            print(f"{r['features']:<8} n/a ({r['reason']})")
        else:
            print(f"{r['features']:<8} in-sample {r['in_sample_accuracy']:.4f}  cv {r['cv_accuracy']:.4f}  n={r['n']}")
    return 0


def cmd_curate(s: Settings) -> int:
    root = s.path("dataset")
    qpath = root / "questions.jsonl"
    if not qpath.exists():
        raise ConfigError(f"{qpath} not found")
    questions = read_jsonl(qpath, CandidateQuestion)
    solvers = s.words("solvers")
    if not solvers:
        raise ConfigError("curate needs --solvers (the solver ids that must agree)")
    out = out_dir(s)
    gw = bid = sampling = store = None
    backends = {}
    if any(q.solvability is None for q in questions):
        store = RolloutStore(out)
        gw, bid, sampling, backends = build_gateway(s, store)
    k = s.int("k", 1024)
    floor = s.int("floor")
    kept, stages = curate(questions, gw, required_solvers=solvers, k=k, backend_id=bid or "", sampling=sampling,
                          store=store, low=s.float("band_low", 0.05), high=s.float("band_high", 0.5), floor=floor)
    write_jsonl(out / "curated.jsonl", kept)
    (out / "curation.json").write_text(dump_json({"stages": [st.__dict__ for st in stages]}), encoding="utf-8")
    manifest(s, "curate", backends, inputs={"dataset": str(root), "k": k, "solvers": solvers})
    print(" -> ".join(f"{st.stage}:{st.kept}" for st in stages))
    return 0


def cmd_audit(s: Settings) -> int:
    problems, candidates = load_dataset(s)
    pmap = {p.id: p for p in problems}
    out = out_dir(s)
    store = RolloutStore(out)
    gw, bid, sampling, backends = build_gateway(s, store)
    targets = [c for c in candidates if s.bool("audit_all") or c.label == "wrong"]
    tpl = templates.load("error_audit")
    from .gateway import GenerationRequest

    reqs = [GenerationRequest(bid, templates.render(tpl, {"original question": pmap[c.problem_id].statement,
                                                           "candidate solution": c.solution_text}),
                              sampling, 0, "error_audit") for c in targets]
    rows, counts = [], {}
    for c, gen in zip(targets, gw.generate_batch(reqs)):
        row = {"candidate_id": c.id}
        if not gen.ok:
            row["error"] = str(gen.error)
        else:
            from .model import Rollout
            from .store import CacheKey

            store.put_rollout(CacheKey.for_request(gen.request),
                              Rollout(bid, gen.request.prompt_hash, 0, gen.completion), prompt=gen.request.prompt)
            try:
                cats = parse_error_audit(gen.completion, c.solution_text)
            except ParseError as exc:
                row["parse_error"] = str(exc)
            else:
                row["categories"] = [
                    {"id": k.id, "name": k.name, "documented": k.documented,
                     "quotes": [e.quote for e in k.evidence], "evidence_violations": k.evidence_violations}
                    for k in cats
                ]
                for k in cats:
                    counts[str(k.id)] = counts.get(str(k.id), 0) + 1
        rows.append(row)
    (out / "audits.jsonl").write_text("".join(json.dumps(r, ensure_ascii=False) + "\n" for r in rows), encoding="utf-8")
    summary = {"audited": len(rows), "category_counts": dict(sorted(counts.items())),
               "unparseable": sum("parse_error" in r for r in rows), "failed": sum("error" in r for r in rows)}
    (out / "audit.json").write_text(dump_json(summary), encoding="utf-8")
    manifest(s, "audit", backends, inputs={"dataset": str(s.get("dataset"))}, digests=("error_audit",))
    print(f"audited {len(rows)} candidates: {summary['category_counts']}")
    return 0


def cmd_synth(s: Settings) -> int:
    from .synthetic import make_dataset, make_script

    root = Path(s.get("dataset") or out_dir(s) / "synthetic")
    root.mkdir(parents=True, exist_ok=True)
    problems, candidates = make_dataset(s.int("problems", 40), human=s.bool("include_human", True))
    write_jsonl(root / "problems.jsonl", problems)
    write_jsonl(root / "candidates.jsonl", candidates)
    script = make_script(seed=s.int("seed", 0))
    (root / "mock_script.json").write_text(dump_json(script.to_dict()), encoding="utf-8")
    print(f"wrote synthetic dataset to {root}")
    return 0


COMMANDS = {
    "ingest": cmd_ingest,
    "rollout": cmd_rollout,
    "score-cbu": cmd_score_cbu,
    "score-judge": cmd_score_judge,
    "metrics": cmd_metrics,
    "bootstrap": cmd_bootstrap,
    "regress": cmd_regress,
    "curate": cmd_curate,
    "audit": cmd_audit,
    "report": lambda s: cmd_metrics(s, full=True),
    "synth": cmd_synth,
}

HELP = {
    "ingest": "validate and normalize a dataset",
    "rollout": "estimate solvability avg@k with bare attempts",
    "score-cbu": "score candidates by consequence-based utility",
    "score-judge": "score candidates with an LLM judge (or a scalar reward adapter)",
    "metrics": "ranking metrics for scored candidates -> report.json",
    "bootstrap": "rollout-budget error curves from per-rollout units",
    "regress": "logistic-regression correctness probes on score features",
    "curate": "filter neighborhood questions by solvability band and solver agreement",
    "audit": "error-taxonomy pass over wrong candidates",
    "report": "assemble the full report (metrics plus all analyses)",
    "synth": "write a synthetic labeled dataset and mock script",
}


def _formatter(prog):
    return argparse.HelpFormatter(prog, width=100, max_help_position=32)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, formatter_class=_formatter)
    g = common.add_argument_group("common options")
    g.add_argument("--config", help="key = value settings file (flags override it)")
    g.add_argument("--dataset", help="dataset directory (problems.jsonl, candidates.jsonl, questions.jsonl)")
    g.add_argument("--backend", choices=("mock", "http"), help="generation backend")
    g.add_argument("--mock-script", dest="mock_script", help="JSON rule script for the mock backend")
    g.add_argument("--temperature", type=float, help="sampling temperature (required for http backends)")
    g.add_argument("--T", type=int, help="rollouts per neighborhood question / judge calls per candidate")
    g.add_argument("--scheme", choices=sorted(SCALES), help="judge scoring scheme")
    g.add_argument("--seed", type=int, help="seed for mock backend, bootstrap and folds")
    g.add_argument("--out", help="output directory (default cbu-out)")
    g.add_argument("--strict-pool", dest="strict_pool", action="store_const", const=True,
                   help="enforce 4 correct / 5 wrong / <=1 human pools")
    g.add_argument("--tie-mode", dest="tie_mode", choices=M.TIE_MODES, help="tie handling for Acc@1 and Recall@5")
    g.add_argument("--bootstrap-mode", dest="bootstrap_mode", choices=("replacement", "subsample"),
                   help="resample with or without replacement")
    g.add_argument("--probe-protocol", dest="probe_protocol", help="in_sample or k_fold:<k>")
    g.add_argument("-v", "--verbose", action="count", default=0, help="more logging")

    parser = argparse.ArgumentParser(prog="cbu", description="Consequence-based utility evaluation engine.",
                                     formatter_class=_formatter)
    parser.add_argument("--version", action="version", version=f"cbu {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, parents=[common], help=HELP[name], description=HELP[name], formatter_class=_formatter)
        x = p.add_argument_group("command options")
        if name in ("rollout", "curate"):
            x.add_argument("--k", type=int, help="attempts per question (rollout default 64, curate default 1024)")
        if name == "score-judge":
            x.add_argument("--method", choices=("judge", "genrm_adapter"), help="judge prompt or scalar adapter")
        if name in ("metrics",):
            x.add_argument("--method", help="restrict to method keys, e.g. cbu,judge:ten_point")
        if name in ("metrics", "report", "regress", "synth"):
            x.add_argument("--include-human", dest="include_human", action="store_const", const=True,
                           help="rank the human solution with the model candidates")
        if name == "bootstrap":
            x.add_argument("--n-values", dest="n_values", help="comma-separated subsample sizes (default 4,8,16,32,64)")
            x.add_argument("--resamples", type=int, help="bootstrap resamples per n (default 200)")
            x.add_argument("--units", help="units.jsonl to read (default <out>/units.jsonl)")
        if name == "regress":
            x.add_argument("--regularization", type=float, help="L2 strength (default 1e-4)")
        if name == "curate":
            x.add_argument("--solvers", help="comma-separated solver ids that must agree")
            x.add_argument("--floor", type=int, help="also require an integer answer above this value")
        if name == "audit":
            x.add_argument("--audit-all", dest="audit_all", action="store_const", const=True,
                           help="audit every candidate, not only wrong ones")
        if name == "report":
            x.add_argument("--bins", type=int, help="difficulty bins for the score-gap table (default 10)")
        if name == "synth":
            x.add_argument("--problems", type=int, help="number of synthetic problems (default 40)")
        p.set_defaults(func=COMMANDS[name])
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "command", None):
        parser.print_help()
        return EXIT_CONFIG
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        s = resolve_settings(args)
        return args.func(s)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (DataError, CBUError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
