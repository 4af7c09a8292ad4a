"""Command-line front end: ``fraclap <command> --config run.json``."""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .eigensolver import ConvergenceError, poincare_lambda1
from .functionals import PinnedConstants, PinningError, ProblemParams, critical_exponent, pin_constants
from .geometry import make_mask
from .io import atomic_write_text, dump_field, write_json
from .minimizer import LambdaStarError, groundstate, lambda_star, s_curve
from .spectral import make_grid
from .testfunctions import verify_lemma31

log = logging.getLogger("fraclap")

COMMANDS = ("constants", "lemma31", "eigen", "groundstate", "scurve", "lambdastar", "sweep")
SCURVE_CSV = "fraclap-scurve/1"
SWEEP_CSV = "fraclap-sweep/1"
SWEEP_COLUMNS = ["key", "m", "s", "status", "lambda1", "lambda_star", "lambda_star_over_lambda1",
                 "bracket_lo", "bracket_hi", "S_m_hat", "S_curve_nonincreasing", "error"]
MONOTONE_SLACK = 0.005


class ConfigError(ValueError):
    pass


def expand_range(spec, name: str) -> list:
    """A list, a scalar, or ``{"start", "stop", "num"}`` (inclusive linspace)."""
    if isinstance(spec, dict):
        try:
            num = int(spec["num"])
            vals = list(np.linspace(float(spec["start"]), float(spec["stop"]), num))
        except KeyError as exc:
            raise ConfigError(f"range {name!r} needs start, stop and num") from exc
    elif isinstance(spec, (list, tuple)):
        vals = [float(v) for v in spec]
    elif isinstance(spec, (int, float)):
        vals = [float(spec)]
    else:
        raise ConfigError(f"range {name!r} must be a list, number or start/stop/num object")
    if not vals:
        raise ConfigError(f"range {name!r} is empty")
    return [float(v) for v in vals]


@dataclass
class RunConfig:
    command: str
    grid: dict
    domain: dict
    params: dict
    tolerances: dict = dc_field(default_factory=dict)
    output_dir: Path = Path("fraclap-out")
    workers: int = 1
    checkpoint: Path | None = None
    raw: dict = dc_field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict, command: str, workers: int = 1, checkpoint=None) -> "RunConfig":
        for key in ("grid", "params"):
            if key not in d:
                raise ConfigError(f"config is missing the {key!r} section")
        out = os.environ.get("FRACLAP_OUTPUT_DIR") or d.get("output_dir", "fraclap-out")
        if workers < 1:
            raise ConfigError("workers must be >= 1")
        cfg = cls(command, d["grid"], d.get("domain", {"shape": "ball", "radius": 1.0}),
                  d["params"], d.get("tolerances", {}), Path(out), workers,
                  Path(checkpoint) if checkpoint else None, d)
        cfg.validate()
        return cfg

    def tol(self, name, default):
        return float(self.tolerances.get(name, default))

    def make_grid(self):
        g = self.grid
        return make_grid(int(g["n"]), int(g["N"]), float(g["L"]))

    def problem(self, m=None, s=None, lam=None) -> ProblemParams:
        p = self.params
        return ProblemParams(
            int(self.grid["n"]),
            float(p["m"] if m is None else m),
            float(p.get("s", 0.0) if s is None else s),
            float(p.get("lambda", 0.0) if lam is None else lam),
            p.get("variant", "spectral"),
        )

    def validate(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        grid = self.make_grid()
        if self.command == "sweep":
            sw = self.raw.get("sweep")
            if not sw:
                raise ConfigError("sweep command needs a 'sweep' section")
            ms = expand_range(sw.get("m", self.params.get("m")), "m")
            ss = expand_range(sw.get("s", self.params.get("s", 0.0)), "s")
            for m in ms:
                critical_exponent(grid.n, m)
            if sw.get("task", "lambdastar") not in ("lambdastar", "groundstate"):
                raise ConfigError("sweep task must be 'lambdastar' or 'groundstate'")
            if sw.get("task") == "groundstate":
                expand_range(sw.get("lambda_fraction"), "lambda_fraction")
            # individual (m, s) pairs with s >= m are recorded as failed, not rejected
            params = self.problem(m=ms[0], s=0.0, lam=0.0)
        else:
            params = self.problem()
        make_mask(grid, self.domain, params.variant)
        if self.command in ("scurve",):
            lam_list = self.raw.get("lambda_list")
            frac_list = self.raw.get("lambda_fractions")
            if lam_list is None and frac_list is None:
                raise ConfigError("scurve needs 'lambda_list' or 'lambda_fractions'")
            expand_range(lam_list if lam_list is not None else frac_list, "lambda")


# --- commands ------------------------------------------------------------------


def _constants(cfg: RunConfig, params: ProblemParams) -> PinnedConstants:
    path = cfg.raw.get("constants")
    if path:
        c = PinnedConstants.load(path)
        if c.n != params.n or not math.isclose(c.m, params.m):
            raise ConfigError(f"constants file {path} is for (n, m) = ({c.n}, {c.m})")
        return c
    return pin_constants(params.n, params.m, with_hardy=params.variant == "hardy")


def _eigen(cfg, grid, mask, params):
    return poincare_lambda1(grid, mask, params.m, params.s, params.variant,
                            tol=cfg.tol("eigen", 1e-8))


def cmd_constants(cfg: RunConfig) -> int:
    params = cfg.problem()
    c = pin_constants(params.n, params.m, with_hardy=bool(cfg.raw.get("with_hardy", True)))
    c.save(cfg.output_dir / "constants.json")
    print(f"S_m_hat = {c.S_m_hat:.10g}")
    if c.H_m_hat is not None:
        print(f"H_m_hat = {c.H_m_hat:.10g}")
    print(f"M_hat   = {c.M_hat:.10g}")
    return 0


def cmd_lemma31(cfg: RunConfig) -> int:
    grid = cfg.make_grid()
    params = cfg.problem()
    mask = make_mask(grid, cfg.domain, params.variant)
    rep = verify_lemma31(grid, mask, params.n, params.m, params.s,
                         eps_ladder=cfg.raw.get("eps_ladder"), delta=cfg.raw.get("delta"),
                         tol=cfg.tol("slope", 0.15))
    atomic_write_text(cfg.output_dir / "lemma31.csv", rep.to_csv())
    atomic_write_text(cfg.output_dir / "lemma31.json", rep.to_json() + "\n")
    print(f"regime: {rep.regime}")
    for name, ok in rep.verdicts.items():
        pred = rep.predicted.get(name)
        pred_txt = "log law" if pred is None else f"{pred:+.4f}"
        print(f"{'PASS' if ok else 'FAIL'} {name}: slope {rep.fitted_slopes[name]:+.4f} "
              f"expected {pred_txt}")
    return 0


def cmd_eigen(cfg: RunConfig) -> int:
    grid = cfg.make_grid()
    params = cfg.problem()
    mask = make_mask(grid, cfg.domain, params.variant)
    res = _eigen(cfg, grid, mask, params)
    write_json(cfg.output_dir / "eigen.json", res.to_dict())
    if cfg.raw.get("dump_fields"):
        dump_field(res.eigenfield, cfg.output_dir / "eigenfield.f8")
    print(f"Lambda_1 = {res.lambda1:.12g} ({res.iterations} iterations)")
    return 0


def _resolve_lambda(cfg, grid, mask, params):
    eigen = None
    frac = cfg.params.get("lambda_fraction")
    if frac is not None or params.lam > 0:
        eigen = _eigen(cfg, grid, mask, params)
    if frac is not None:
        params = params.with_lambda(float(frac) * eigen.lambda1)
    return params, eigen


def cmd_groundstate(cfg: RunConfig) -> int:
    grid = cfg.make_grid()
    params = cfg.problem()
    mask = make_mask(grid, cfg.domain, params.variant)
    params, eigen = _resolve_lambda(cfg, grid, mask, params)
    res = groundstate(grid, mask, params, tol=cfg.tol("minimizer", 1e-10), eigen=eigen)
    out = res.to_dict()
    if eigen is not None:
        out["lambda1"] = eigen.lambda1
    write_json(cfg.output_dir / "groundstate.json", out)
    if cfg.raw.get("dump_fields"):
        dump_field(res.field, cfg.output_dir / "groundstate.f8")
    print(f"S = {res.S_value:.10g} concentrated={res.concentrated} r_eff={res.r_eff:.4g}")
    return 0


def scurve_csv(rows) -> str:
    buf = io.StringIO()
    buf.write(f"# {SCURVE_CSV}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["lambda", "S_value", "converged", "concentrated", "r_eff", "iterations", "error"])
    for lam, r, err in rows:
        if r is None:
            w.writerow([repr(lam), "", "", "", "", "", err or ""])
        else:
            w.writerow([repr(lam), repr(r.S_value), int(r.converged), int(r.concentrated),
                        repr(r.r_eff), r.iterations, err or ""])
    return buf.getvalue()


def cmd_scurve(cfg: RunConfig) -> int:
    grid = cfg.make_grid()
    params = cfg.problem()
    mask = make_mask(grid, cfg.domain, params.variant)
    eigen = _eigen(cfg, grid, mask, params)
    if cfg.raw.get("lambda_list") is not None:
        lams = expand_range(cfg.raw["lambda_list"], "lambda_list")
    else:
        lams = [f * eigen.lambda1 for f in expand_range(cfg.raw["lambda_fractions"], "lambda_fractions")]
    rows = s_curve(grid, mask, params, lams, tol=cfg.tol("minimizer", 1e-10), eigen=eigen)
    atomic_write_text(cfg.output_dir / "scurve.csv", scurve_csv(rows))
    write_json(cfg.output_dir / "scurve.json", {
        "lambda1": eigen.lambda1,
        "points": [dict(r.to_dict(), error=err) if r is not None else {"lambda": lam, "error": err}
                   for lam, r, err in rows],
    })
    failed = sum(err is not None for _, _, err in rows)
    print(f"{len(rows) - failed}/{len(rows)} points converged; Lambda_1 = {eigen.lambda1:.10g}")
    return 2 if failed else 0


def cmd_lambdastar(cfg: RunConfig) -> int:
    grid = cfg.make_grid()
    params = cfg.problem()
    mask = make_mask(grid, cfg.domain, params.variant)
    res = lambda_star(grid, mask, params, _constants(cfg, params),
                      tol_lambda=cfg.tol("lambda", 0.01), margin=cfg.tol("margin", 0.02),
                      tol=cfg.tol("minimizer", 1e-10), eigen=_eigen(cfg, grid, mask, params))
    write_json(cfg.output_dir / "lambdastar.json", res.to_dict())
    print(f"lambda* = {res.lambda_star:.8g} = {res.fraction:.4f} Lambda_1")
    return 0


# --- sweep ---------------------------------------------------------------------


def canonical_key(m: float, s: float, frac: float | None = None) -> str:
    key = f"m={m!r}|s={s!r}"
    return key if frac is None else f"{key}|lambda_fraction={frac!r}"


def _key_order(key: str):
    return tuple(float(part.split("=")[1]) for part in key.split("|"))


def sweep_tasks(cfg: RunConfig) -> list:
    sw = cfg.raw["sweep"]
    ms = expand_range(sw.get("m", cfg.params.get("m")), "m")
    ss = expand_range(sw.get("s", cfg.params.get("s", 0.0)), "s")
    if sw.get("task", "lambdastar") == "groundstate":
        fr = expand_range(sw.get("lambda_fraction"), "lambda_fraction")
        combos = [(m, s, f) for m, s, f in itertools.product(ms, ss, fr)]
    else:
        combos = [(m, s, None) for m, s in itertools.product(ms, ss)]
    tasks = {canonical_key(*c): c for c in combos}
    return sorted(tasks.items(), key=lambda kv: _key_order(kv[0]))


def _monotone(curve, slack=MONOTONE_SLACK) -> bool:
    vals = [v for _, v in sorted(curve)]
    return all(b <= a + slack * abs(a) for a, b in zip(vals, vals[1:]))


def run_sweep_task(raw: dict, key: str, combo) -> dict:
    """Worker entry point; returns a JSON-serializable record."""
    m, s, frac = combo
    try:
        cfg = RunConfig.from_dict({**raw, "params": {**raw["params"], "m": m, "s": s}},
                                  "lambdastar" if frac is None else "groundstate")
        grid = cfg.make_grid()
        params = cfg.problem(m=m, s=s, lam=0.0)
        mask = make_mask(grid, cfg.domain, params.variant)
        eigen = _eigen(cfg, grid, mask, params)
        if frac is None:
            res = lambda_star(grid, mask, params, _constants(cfg, params),
                              tol_lambda=cfg.tol("lambda", 0.01), margin=cfg.tol("margin", 0.02),
                              tol=cfg.tol("minimizer", 1e-10), eigen=eigen)
            payload = res.to_dict()
        else:
            res = groundstate(grid, mask, params.with_lambda(frac * eigen.lambda1),
                              tol=cfg.tol("minimizer", 1e-10), lambda1=eigen.lambda1,
                              eigen=eigen)
            payload = dict(res.to_dict(), lambda1=eigen.lambda1)
        return {"key": key, "status": "done", "payload": payload}
    except (ValueError, RuntimeError) as exc:
        diag = {"error": str(exc)}
        curve = getattr(exc, "curve", None)
        if curve:
            diag["S_curve"] = [list(p) for p in curve]
        return {"key": key, "status": "failed", "payload": diag}


def read_checkpoint(path: Path) -> dict:
    done = {}
    if not path.exists():
        return done
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError:
            # torn final line from an interrupted append
            continue
        done[rec["key"]] = rec
    return done


def append_checkpoint(path: Path, rec: dict):
    path.parent.mkdir(parents=True, exist_ok=True)
    line = json.dumps(rec, sort_keys=True) + "\n"
    with open(path, "a") as fh:
        fh.write(line)
        fh.flush()
        os.fsync(fh.fileno())


def sweep_csv(tasks, records: dict) -> str:
    buf = io.StringIO()
    buf.write(f"# {SWEEP_CSV}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for key, (m, s, _) in tasks:
        rec = records.get(key, {"status": "pending", "payload": {}})
        p = rec["payload"]
        if rec["status"] == "done" and "lambda_star" in p:
            row = [key, repr(m), repr(s), "done", repr(p["lambda1"]), repr(p["lambda_star"]),
                   repr(p["lambda_star_over_lambda1"]), repr(p["bracket"][0]),
                   repr(p["bracket"][1]), repr(p["S_m_hat"]), int(_monotone(p["S_curve"])), ""]
        elif rec["status"] == "done":
            row = [key, repr(m), repr(s), "done", repr(p["lambda1"]), "", "", "", "", "",
                   "", f"S_value={p['S_value']!r};concentrated={int(p['concentrated'])}"]
        else:
            row = [key, repr(m), repr(s), rec["status"], "", "", "", "", "", "", "",
                   p.get("error", "")]
        w.writerow(row)
    return buf.getvalue()


def cmd_sweep(cfg: RunConfig) -> int:
    tasks = sweep_tasks(cfg)
    ckpt = cfg.checkpoint or cfg.output_dir / "sweep.checkpoint.jsonl"
    records = {k: r for k, r in read_checkpoint(ckpt).items() if r["status"] == "done"}
    todo = [(k, c) for k, c in tasks if k not in records]
    log.info("sweep: %d tasks, %d already done", len(tasks), len(tasks) - len(todo))
    abort_after = int(os.environ.get("FRACLAP_ABORT_AFTER", "0") or 0)
    written = 0
    pool = None

    def record(rec):
        nonlocal written
        append_checkpoint(ckpt, rec)
        records[rec["key"]] = rec
        written += 1
        print(f"{rec['status']:6s} {rec['key']}", flush=True)
        if abort_after and written >= abort_after:
            # test hook: die like a killed process, without cleanup; workers
            # go first so no orphan keeps the caller's pipes open
            for proc in (getattr(pool, "_processes", None) or {}).values():
                proc.kill()
            os._exit(3)

    if cfg.workers == 1:
        for key, combo in todo:
            record(run_sweep_task(cfg.raw, key, combo))
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futs = [pool.submit(run_sweep_task, cfg.raw, k, c) for k, c in todo]
            for fut in as_completed(futs):
                record(fut.result())

    atomic_write_text(cfg.output_dir / "sweep.csv", sweep_csv(tasks, records))
    write_json(cfg.output_dir / "sweep.json",
               [records.get(k, {"key": k, "status": "pending"}) for k, _ in tasks])
    failed = sum(records[k]["status"] != "done" for k, _ in tasks)
    print(f"{len(tasks) - failed}/{len(tasks)} sweep records done")
    return 2 if failed else 0


HANDLERS = {
    "constants": cmd_constants,
    "lemma31": cmd_lemma31,
    "eigen": cmd_eigen,
    "groundstate": cmd_groundstate,
    "scurve": cmd_scurve,
    "lambdastar": cmd_lambdastar,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fraclap", description=__doc__)
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--workers", type=int, default=1, help="worker processes for sweeps")
    ap.add_argument("--resume", metavar="CHECKPOINT", help="sweep checkpoint file to resume from")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def run(cfg: RunConfig) -> int:
    return HANDLERS[cfg.command](cfg)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        raw = json.loads(Path(args.config).read_text())
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        cfg = RunConfig.from_dict(raw, args.command, args.workers, args.resume)
    except (OSError, json.JSONDecodeError, ValueError, KeyError, TypeError) as exc:
        print(f"fraclap: config error: {exc}", file=sys.stderr)
        return 1
    try:
        return run(cfg)
    except (ValueError, KeyError) as exc:
        print(f"fraclap: validation error: {exc}", file=sys.stderr)
        return 1
    except (ConvergenceError, PinningError, LambdaStarError) as exc:
        print(f"fraclap: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
