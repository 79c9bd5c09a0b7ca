"""Command-line entry point: ``mforge <command> [flags]``.

Every command that writes ``--out`` also writes ``<out>.runlog.json`` with the
serialized configuration, library versions and any scaled-plan violations.
``mforge --config <runlog or config json>`` replays a run.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import platform
import sys
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .construction import ConstructedMeasure, ConstructionPlan, local_dim_envelope, plan as make_plan, sample_point
from .core import _atomic_write_text, bernoulli, write_dump
from .errors import BudgetExceeded, GenerationTooDeep, MforgeError, OverflowFaithful, Unreachable
from .spectra import EPS_LADDER, diagonal_fixed_point, ld_spectrum, legendre, local_dim, tau
from .targeting import SftFamily, build_family

COMMANDS = ("family", "plan", "dump", "tau", "ld", "legendre", "localdim", "control")
ANALYSES = ("tau", "ld", "legendre", "localdim", "dump")
EXIT_CONFIG, EXIT_UNREACHABLE, EXIT_BUDGET, EXIT_IO = 2, 3, 4, 5


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    analysis: str | None = None
    a: float = 0.2
    b: float = 0.8
    jmax: int | None = None
    max_memory: int = 12
    seed: int = 0
    mode: str = "scaled"
    L: str | None = None
    q: str = "-2:4:0.25"
    alpha: str = "0.25:0.75:0.05"
    eps: str = ",".join(map(str, EPS_LADDER))
    j: str = "boundaries"
    out: str | None = None
    budget: int | None = None
    plan: str | None = None
    family: str | None = None
    bernoulli: float | None = None
    labels: str | None = None
    point: str | None = None
    backend: str = "auto"

    def validate(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.command == "control":
            if self.analysis not in ANALYSES:
                raise ConfigError(f"control needs one of {ANALYSES}")
            if self.bernoulli is None or not 0 < self.bernoulli < 1:
                raise ConfigError("--bernoulli must lie in (0, 1)")
        if not 0 < self.a < self.b <= 1:
            raise ConfigError("need 0 < a < b <= 1")
        if self.mode not in ("scaled", "faithful"):
            raise ConfigError("--mode is scaled or faithful")
        if self.budget is not None and self.budget < 1:
            raise ConfigError("--budget must be positive")
        if self.command in ("family", "plan", "dump") and self.out is None:
            raise ConfigError(f"{self.command} needs --out")
        for name in ("q", "alpha", "eps"):
            parse_grid(getattr(self, name))
        if any(e <= 0 for e in parse_grid(self.eps)):
            raise ConfigError("--eps values must be positive")
        L = self.L_list()
        if L is not None and self.jmax is not None and len(L) != self.jmax:
            raise ConfigError(f"--L needs {self.jmax} lengths")
        return self

    def L_list(self):
        if self.L is None:
            return None
        try:
            L = [int(x) for x in self.L.split(",")]
        except ValueError as exc:
            raise ConfigError(f"bad --L {self.L!r}") from exc
        if any(x < 1 for x in L):
            raise ConfigError("--L lengths must be positive")
        return L

    def J_max(self):
        if self.jmax is not None:
            return self.jmax
        L = self.L_list()
        return len(L) if L else 4

    def to_json(self):
        return asdict(self)

    @classmethod
    def from_json(cls, d):
        if "config" in d:
            d = d["config"]
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


# -- parsing helpers ---------------------------------------------------------------


def parse_grid(text, include=None):
    """``start:stop:step`` (inclusive) or a comma list; sorted, deduplicated."""
    try:
        if ":" in text:
            parts = [float(x) for x in text.split(":")]
            if len(parts) != 3 or parts[2] <= 0 or parts[1] < parts[0]:
                raise ValueError
            n = int(round((parts[1] - parts[0]) / parts[2]))
            vals = [round(parts[0] + k * parts[2], 12) for k in range(n + 1)]
        else:
            vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad grid {text!r}") from exc
    if not vals or not all(math.isfinite(v) for v in vals):
        raise ConfigError(f"bad grid {text!r}")
    if include is not None:
        vals.append(float(include))
    return sorted(set(vals))


def parse_j(text, plan: ConstructionPlan | None = None):
    """Generations: ``a:b`` or ``a:b:step`` inclusive, a comma list,
    ``boundaries`` (all block boundaries) or ``boundaries:K`` (the last K)."""
    if text.startswith("boundaries"):
        if plan is None:
            raise ConfigError("'boundaries' needs a constructed measure")
        bnd = plan.boundaries
        k = text[len("boundaries"):]
        if k:
            try:
                bnd = bnd[-int(k.lstrip(":")):]
            except ValueError as exc:
                raise ConfigError(f"bad --j {text!r}") from exc
        js = [j for j in bnd if j > 0]
    else:
        try:
            if ":" in text:
                p = [int(x) for x in text.split(":")]
                js = list(range(p[0], p[1] + 1, p[2] if len(p) > 2 else 1))
            else:
                js = [int(x) for x in text.split(",")]
        except (ValueError, IndexError) as exc:
            raise ConfigError(f"bad --j {text!r}") from exc
    if len(js) < 2 or any(b <= a for a, b in zip(js, js[1:])) or js[0] < 1:
        raise ConfigError("--j needs at least two increasing positive generations")
    return js


# -- measures -----------------------------------------------------------------------


def _load_or_build_family(cfg: RunConfig):
    if cfg.family:
        return SftFamily.load(cfg.family)
    return build_family(cfg.a, cfg.b, cfg.J_max(), cfg.max_memory, cfg.seed)


def _plan(cfg: RunConfig) -> ConstructionPlan:
    if cfg.plan:
        return ConstructionPlan.load(cfg.plan)
    fam = _load_or_build_family(cfg)
    return make_plan(cfg.a, cfg.b, fam, cfg.mode, cfg.L_list())


def _measure(cfg: RunConfig):
    if cfg.command == "control":
        return bernoulli(cfg.bernoulli), None
    p = _plan(cfg)
    return ConstructedMeasure(p), p


# -- commands ------------------------------------------------------------------------


def _cmd_family(cfg, log):
    fam = _load_or_build_family(cfg)
    fam.save(cfg.out)
    log["artifacts"].append(cfg.out)


def _cmd_plan(cfg, log):
    fam = _load_or_build_family(cfg)
    p = make_plan(cfg.a, cfg.b, fam, cfg.mode, cfg.L_list())
    out = Path(cfg.out)
    if cfg.family:
        fam_ref = cfg.family
    else:
        fam_path = out.with_name(out.stem + ".family.json")
        fam.save(fam_path)
        log["artifacts"].append(str(fam_path))
        fam_ref = fam_path.name
    p.save(out, fam_ref)
    log["artifacts"].append(cfg.out)
    log["violations"] = p.to_json()["violations"]


def _analysis(cfg, log):
    measure, p = _measure(cfg)
    if p is not None:
        log["violations"] = p.to_json()["violations"]
    kind = cfg.analysis if cfg.command == "control" else cfg.command
    if kind == "dump":
        try:
            j = int(cfg.j)
        except ValueError as exc:
            raise ConfigError("dump needs a single generation --j") from exc
        write_dump(measure, j, cfg.out, budget=cfg.budget)
        log["artifacts"].append(cfg.out)
        return None
    js = parse_j(cfg.j, p)
    if kind == "tau":
        return tau(measure, parse_grid(cfg.q, include=1.0), js, cfg.backend, cfg.budget).to_csv()
    if kind == "legendre":
        t = tau(measure, parse_grid(cfg.q, include=1.0), js, cfg.backend, cfg.budget)
        leg = legendre(t, parse_grid(cfg.alpha))
        try:
            fp = diagonal_fixed_point(leg)
            log["fixed_point"] = {"alpha": fp.alpha, "lo": fp.lo, "hi": fp.hi, "degenerate": fp.degenerate}
        except MforgeError as exc:
            log["fixed_point"] = {"error": str(exc)}
        return leg.to_csv()
    if kind == "ld":
        ests = [ld_spectrum(measure, parse_grid(cfg.alpha), e, js, cfg.backend, cfg.budget) for e in parse_grid(cfg.eps)[::-1]]
        buf = io.StringIO()
        for i, est in enumerate(ests):
            text = est.to_csv()
            buf.write(text if i == 0 else text.split("\n", 1)[1])
        return buf.getvalue()
    if kind == "localdim":
        return _localdim_csv(cfg, measure, p, js)
    raise ConfigError(f"unknown analysis {kind!r}")


def _localdim_csv(cfg, measure, p, js):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["point", "estimate", "stderr", "j_min", "j_max", "envelope_lo", "envelope_hi"])
    if cfg.point:
        points = [(cfg.point[:16], cfg.point, None)]
    elif p is not None:
        labels = cfg.labels.split(",") if cfg.labels else [format(k, f"0{p.J_max}b") for k in range(2**p.J_max)]
        points = [(y, sample_point(measure, y), local_dim_envelope(p, y)) for y in labels]
    else:
        raise ConfigError("localdim on a control measure needs --point")
    for name, pt, env in points:
        est = local_dim(measure, pt, js)
        lo, hi = env if env else ("", "")
        w.writerow([name, repr(est.value), repr(est.stderr), est.j_min, est.j_max, lo, hi])
    return buf.getvalue()


def run(cfg: RunConfig, argv=None) -> int:
    """Execute one configuration; returns the process exit status."""
    log = {
        "config": cfg.to_json(),
        "argv": argv,
        "versions": {"mforge": __version__, "python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__},
        "started": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "artifacts": [],
        "violations": [],
    }
    try:
        cfg.validate()
        if cfg.command == "family":
            _cmd_family(cfg, log)
        elif cfg.command == "plan":
            _cmd_plan(cfg, log)
        else:
            text = _analysis(cfg, log)
            if text is not None:
                if cfg.out:
                    _atomic_write_text(cfg.out, text)
                    log["artifacts"].append(cfg.out)
                else:
                    sys.stdout.write(text)
        status = 0
    except (ConfigError, OverflowFaithful, GenerationTooDeep, ValueError) as exc:
        status, log["error"] = EXIT_CONFIG, str(exc)
    except Unreachable as exc:
        status, log["error"] = EXIT_UNREACHABLE, f"{exc} (required memory ~{exc.required_memory})"
    except BudgetExceeded as exc:
        status, log["error"] = EXIT_BUDGET, str(exc)
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        status, log["error"] = EXIT_IO, f"{type(exc).__name__}: {exc}"
    log["status"] = status
    if "error" in log:
        print(f"mforge: error: {log['error']}", file=sys.stderr)
    if cfg.out:
        try:
            _atomic_write_text(cfg.out + ".runlog.json", json.dumps(log, sort_keys=True, indent=1, default=str) + "\n")
        except OSError as exc:
            print(f"mforge: error: cannot write run log: {exc}", file=sys.stderr)
            status = status or EXIT_IO
    return status


def _common(p: argparse.ArgumentParser):
    p.add_argument("--a", type=float, default=0.2)
    p.add_argument("--b", type=float, default=0.8)
    p.add_argument("--jmax", type=int)
    p.add_argument("--max-memory", dest="max_memory", type=int, default=12)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=("scaled", "faithful"), default="scaled")
    p.add_argument("--L", help="block lengths L_2,...,L_{J_max+1}")
    p.add_argument("--q", default="-2:4:0.25", help="q grid, start:stop:step or list; q=1 always included")
    p.add_argument("--alpha", default="0.25:0.75:0.05")
    p.add_argument("--eps", default=",".join(map(str, EPS_LADDER)))
    p.add_argument("--j", default="boundaries", help="a:b[:step], list, boundaries or boundaries:K")
    p.add_argument("--out")
    p.add_argument("--budget", type=int)
    p.add_argument("--plan", help="plan JSON to load instead of building one")
    p.add_argument("--family", help="family manifest to load instead of searching")
    p.add_argument("--labels", help="comma-separated labels for localdim")
    p.add_argument("--point", help="binary digits of a point for localdim")
    p.add_argument("--backend", choices=("auto", "enumerate", "boundary_product"), default="auto")


def build_parser():
    parser = argparse.ArgumentParser(prog="mforge", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="replay a RunConfig (or run-log) JSON")
    sub = parser.add_subparsers(dest="command")
    for name in COMMANDS:
        p = sub.add_parser(name)
        if name == "control":
            p.add_argument("--bernoulli", type=float, required=True, help="weight of digit 0")
            p.add_argument("analysis", choices=ANALYSES)
        _common(p)
    return parser


GRID_FLAGS = ("--q", "--alpha", "--eps", "--j", "--L")


def _glue_negative(argv):
    """Attach values such as ``-2:4:0.25`` to their flag so argparse does not
    read them as options."""
    out, i = [], 0
    while i < len(argv):
        if argv[i] in GRID_FLAGS and i + 1 < len(argv) and argv[i + 1][:1] == "-" and argv[i + 1][1:2].isdigit():
            out.append(f"{argv[i]}={argv[i + 1]}")
            i += 2
        else:
            out.append(argv[i])
            i += 1
    return out


def main(argv=None) -> int:
    argv = _glue_negative(list(sys.argv[1:] if argv is None else argv))
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            cfg = RunConfig.from_json(json.loads(Path(args.config).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as exc:
            print(f"mforge: error: {exc}", file=sys.stderr)
            return EXIT_IO
        except TypeError as exc:
            print(f"mforge: error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        return run(cfg, argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    known = {f.name for f in fields(RunConfig)}
    cfg = RunConfig(**{k: v for k, v in vars(args).items() if k in known})
    return run(cfg, argv)


if __name__ == "__main__":
    sys.exit(main())
