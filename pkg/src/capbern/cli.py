"""Batch command line: ``capbern run CONFIG`` plus direct subcommands.

Exit codes: 0 success, 2 when a hypothesis is unmet or the data is
degenerate, 1 on any other error.  Outputs are written atomically and are
byte-identical across repeated runs; wall-clock timing goes only to
``run.log``.
"""

from __future__ import annotations

import json
import math
import os
import sys
import tempfile
import time
from pathlib import Path
from typing import Any, Callable

import click
import numpy as np

from . import certify, fieldio, link, render
from .errors import CapbernError, ConfigInvalid, SOFT_FAILURES
from .grid import GridSpec, ScalarField

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


# --- output ---------------------------------------------------------------------


def dumps(obj: Any) -> str:
    return json.dumps(_plain(obj), sort_keys=True, indent=2) + "\n"


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def write_atomic(path: Path, data: str | bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"newline": "", "encoding": "utf-8"})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def apply_thread_cap() -> int | None:
    raw = os.environ.get("CAPBERN_THREADS")
    if raw is None:
        return None
    try:
        n = int(raw)
        if n < 1:
            raise ValueError
    except ValueError:
        raise ConfigInvalid("CAPBERN_THREADS", "must be a positive integer") from None
    import numba

    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
    return n


# --- config access --------------------------------------------------------------


class Params:
    """Typed access to a config table; records which keys were consumed."""

    def __init__(self, table: dict, base: Path):
        self.t = dict(table)
        self.base = base
        self.used: set[str] = set()

    def _get(self, key, default, required):
        self.used.add(key)
        if key not in self.t:
            if required:
                raise ConfigInvalid(key, "required")
            return default
        return self.t[key]

    def num(self, key, default=None, *, required=False, lo=None, hi=None, lo_open=False, hi_open=False) -> float:
        v = self._get(key, default, required)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigInvalid(key, "expected a number")
        v = float(v)
        if not math.isfinite(v):
            raise ConfigInvalid(key, "must be finite")
        if lo is not None and (v < lo or (lo_open and v == lo)):
            raise ConfigInvalid(key, f"out of range (lower bound {lo})")
        if hi is not None and (v > hi or (hi_open and v == hi)):
            raise ConfigInvalid(key, f"out of range (upper bound {hi})")
        return v

    def int(self, key, default=None, *, required=False, lo=None, hi=None) -> int:
        v = self._get(key, default, required)
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigInvalid(key, "expected an integer")
        if (lo is not None and v < lo) or (hi is not None and v > hi):
            raise ConfigInvalid(key, "out of range")
        return v

    def str(self, key, default=None, *, required=False, choices=None) -> str:
        v = self._get(key, default, required)
        if not isinstance(v, str):
            raise ConfigInvalid(key, "expected a string")
        if choices and v not in choices:
            raise ConfigInvalid(key, f"expected one of {sorted(choices)}")
        return v

    def nums(self, key, default=None, *, required=False) -> list[float]:
        v = self._get(key, default, required)
        if not isinstance(v, list) or not v or any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in v):
            raise ConfigInvalid(key, "expected a nonempty list of numbers")
        return [float(x) for x in v]

    def path(self, key, *, required=False) -> Path | None:
        v = self._get(key, None, required)
        if v is None:
            return None
        if not isinstance(v, str):
            raise ConfigInvalid(key, "expected a path string")
        p = Path(v)
        if not p.is_absolute():
            p = self.base / p
        if not p.exists():
            raise ConfigInvalid(key, f"file {p} does not exist")
        return p

    def check_unused(self):
        extra = sorted(set(self.t) - self.used)
        if extra:
            raise ConfigInvalid(extra[0], "unknown key")

    def echo(self) -> dict:
        return {k: self.t[k] for k in sorted(self.t)}


def _grid(p: Params) -> GridSpec:
    dim = p.int("dim", 2, lo=1, hi=3)
    hw = p.num("half_width", 1.0, lo=0, lo_open=True)
    h = p.num("h", 1 / 64, lo=0, lo_open=True)
    try:
        return GridSpec.box(dim, hw, h)
    except ValueError as exc:
        raise ConfigInvalid("h", str(exc)) from None


GENERATORS = ("planar", "wedge", "zero")


def _generator(p: Params, dim: int) -> tuple[str, Callable]:
    from .linearize import planar, wedge

    name = p.str("generator", "planar", choices=GENERATORS)
    if name == "planar":
        normal = p.nums("normal", [1.0] + [0.0] * (dim - 1))
        if len(normal) != dim or not any(normal):
            raise ConfigInvalid("normal", f"expected {dim} components, not all zero")
        return name, planar(normal)
    if name == "wedge":
        if dim < 2:
            raise ConfigInvalid("generator", "wedge data needs dim >= 2")
        return name, wedge
    return name, lambda *x: np.zeros_like(x[0])


def _theta(p: Params, key="theta", hi=math.pi / 2, hi_open=False) -> float:
    return p.num(key, required=True, lo=0, lo_open=True, hi=hi, hi_open=hi_open)


def _field_outputs(stem: str, f: ScalarField) -> dict[str, str | bytes]:
    out: dict[str, str | bytes] = {f"{stem}.bin": fieldio.to_bytes(f), f"{stem}.csv": fieldio.to_csv(f)}
    if f.grid.dim == 2:
        out[f"{stem}.svg"] = render.render_svg(f, [0.0])
    return out


# --- experiments ----------------------------------------------------------------

Result = tuple[dict, dict]  # (json payload, extra files)


def exp_minimize(p: Params, kind: str) -> Result:
    from .energy import bernoulli_energy, capillary_energy
    from .minimize import Schedule, capillary_schedule, minimize_bernoulli, minimize_capillary

    grid = _grid(p)
    theta = _theta(p) if kind == "capillary" else None
    name, gen = _generator(p, grid.dim)
    amp = p.num("data_scale", 1.0, lo=0)
    el_tol = p.num("el_tol", 1e-6, lo=0, lo_open=True)
    base = ScalarField.from_function(grid, gen) * amp
    if kind == "capillary":
        t = math.tan(theta) if theta < math.pi / 2 else 1.0
        rep = minimize_capillary(base * t, theta, capillary_schedule(grid, theta, el_tol=el_tol))
        energy = capillary_energy(rep.field, theta)
    else:
        rep = minimize_bernoulli(base, Schedule.default(grid.h, el_tol=el_tol))
        energy = bernoulli_energy(rep.field)
    payload = {"report": rep.to_dict(), "energy": energy.to_dict()}
    return payload, _field_outputs("field", rep.field)


def exp_sweep(p: Params) -> Result:
    from .linearize import SweepConfig, linearization_sweep

    grid = _grid(p)
    thetas = p.nums("theta_list", required=True)
    if any(not 0 < t < math.pi / 2 for t in thetas) or any(b >= a for a, b in zip(thetas, thetas[1:])):
        raise ConfigInvalid("theta_list", "angles must be strictly decreasing in (0, pi/2)")
    name, gen = _generator(p, grid.dim)
    normal = tuple(p.t["normal"]) if name == "planar" and "normal" in p.t else None
    cfg = SweepConfig(
        tuple(thetas), grid, generator=gen if name != "planar" else None, generator_name=name, normal=normal,
        el_tol=p.num("el_tol", 1e-6, lo=0, lo_open=True), band=p.num("band", 0.1, lo=0),
    )
    rep = linearization_sweep(cfg)
    return rep.to_dict(), {"sweep.csv": rep.to_csv()}


def exp_hodograph(p: Params) -> Result:
    from .hodograph import HodographField, coefficients, minimizer_hodograph, natural_bc_residual, pde_residual

    theta = _theta(p)
    source = p.str("source", "exact", choices=("exact", "minimizer", "file"))
    payload: dict = {"theta": theta, "source": source}
    if source == "file":
        from .hodograph import hodograph_transform

        v = fieldio.load(p.path("field", required=True))
        level = p.num("level", 0.0, lo=0)
        hf = hodograph_transform(v, theta, level=level)
        payload["level"] = level
    elif source == "exact":
        grid = _grid(p)
        hg = GridSpec(grid.dim, (0.0,) + grid.lo[1:], grid.hi, grid.h)
        hf = HodographField.exact(hg, lambda *x: x[0], theta)
    else:
        grid = _grid(p)
        hf, rep = minimizer_hodograph(grid, theta, p.num("el_tol", 1e-6, lo=0, lo_open=True))
        payload["minimize"] = rep.to_dict(with_trace=False)
        payload["level"] = hf.level
    res = pde_residual(hf)
    payload["residual"] = res.to_dict()
    coef = {fam: coefficients(hf, fam) for fam in ("a", "tilde", "bar")}
    payload["max_deviation_from_identity"] = {fam: c.max_deviation_from_identity() for fam, c in coef.items()}
    if hf.grid.dim >= 2:
        payload["natural_bc"] = {str(k): natural_bc_residual(hf, k) for k in range(2, hf.grid.dim + 1)}
    return payload, {"coefficients_bar.csv": coef["bar"].to_csv()}


def _link_mesh(p: Params) -> link.LinkMesh:
    path = p.path("mesh")
    if path is not None:
        try:
            return link.LinkMesh.from_text(path.read_text())
        except (ValueError, OSError) as exc:
            raise ConfigInvalid("mesh", str(exc)) from None
    theta = _theta(p)
    level = p.int("level", 6, lo=0, hi=8)
    return link.flat_link(theta, level)


def exp_link_spectrum(p: Params) -> Result:
    mesh = _link_mesh(p)
    ep = link.first_eigenpair(mesh)
    bound = link.spectral_bound(mesh.n)
    payload = {
        "n": mesh.n,
        "theta": mesh.theta,
        "triangles": len(mesh.triangles),
        "lambda1": ep.value,
        "bound": bound,
        "bound_holds": ep.value >= bound - 1e-8,
        "rayleigh_of_eigenvector": link.stability_rayleigh(mesh, ep.vector),
    }
    return payload, {}


def exp_gauss_bonnet(p: Params) -> Result:
    mesh = _link_mesh(p)
    rec = link.gauss_bonnet_check(mesh)
    return {"theta": mesh.theta, "triangles": len(mesh.triangles), **rec.to_dict()}, {}


def exp_simons(p: Params) -> Result:
    family = p.str("family", "clifford", choices=("flat", "clifford"))
    pp = p.int("p", 1 if family == "clifford" else 0, lo=0)
    r = p.num("r", 1.0)
    lams = p.nums("lambda_list", None) if "lambda_list" in p.t else [p.num("lambda", 0.5)]
    try:
        cone = link.ConeFamily(family, pp)
    except ValueError as exc:
        raise ConfigInvalid("p", str(exc)) from None
    recs = [{"lambda": lam, **link.simons_probe(cone, lam, r).to_dict()} for lam in lams]
    return {"family": family, "p": pp, "n": cone.n, "r": r, "records": recs}, {}


def _margin_csv(n: int, c: float, theta1: float) -> str:
    lo = max(math.pi / 2 - max(2 * theta1, 0.05), 1e-3)
    thetas = np.linspace(lo, math.pi / 2, 21)
    ps = np.linspace(0.51, 1.0, 50)
    rows = ["theta,p,margin"] + [f"{t!r},{q!r},{m!r}" for t, q, m in certify.margin_slice(n, c, thetas, ps)]
    return "\n".join(rows) + "\n"


def exp_threshold(p: Params) -> Result:
    n = p.int("n", required=True, lo=2)
    c = p.num("c", 1.0, lo=0, lo_open=True)
    res = certify.theta_threshold(n, c)
    return res.to_dict(), {"margin.csv": _margin_csv(n, c, res.theta1)}


def exp_delta0(p: Params) -> Result:
    n = p.int("n", required=True, lo=2)
    lam = p.num("Lambda", certify.default_lambda_constant(n), lo=0, lo_open=True)
    d = certify.delta0_bound(n, lam)
    return {"n": n, "Lambda": lam, "delta0": d}, {}


def exp_dead_core(p: Params) -> Result:
    from .minimize import dead_core_test, face_bump

    grid = _grid(p)
    theta = _theta(p, hi=math.pi / 2, hi_open=True)
    data_kind = p.str("data", "bump", choices=("bump", "shifted-ramp", "zero"))
    if data_kind == "bump":
        data = face_bump(grid, p.num("bump", 1e-3, lo=0) * theta)
    elif data_kind == "shifted-ramp":
        t, off = math.tan(theta), p.num("offset", 0.9)
        data = ScalarField.from_function(grid, lambda *x: t * np.maximum(x[0] + off, 0.0))
    else:
        data = ScalarField.zeros(grid)
    eps_small = p.num("eps_small", 0.05, lo=0, lo_open=True)
    sup_bound = p.num("sup_bound", None) if "sup_bound" in p.t else None
    res = dead_core_test(data, theta, sup_bound=sup_bound, eps_small=eps_small)
    return res.to_dict(), _field_outputs("field", res.report.field)


EXPERIMENTS: dict[str, Callable[[Params], Result]] = {
    "minimize-capillary": lambda p: exp_minimize(p, "capillary"),
    "minimize-bernoulli": lambda p: exp_minimize(p, "bernoulli"),
    "linearization-sweep": exp_sweep,
    "hodograph-check": exp_hodograph,
    "link-spectrum": exp_link_spectrum,
    "gauss-bonnet": exp_gauss_bonnet,
    "simons-probe": exp_simons,
    "theta-threshold": exp_threshold,
    "delta0": exp_delta0,
    "dead-core": exp_dead_core,
}


def load_config(path: Path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigInvalid("config", f"cannot read {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigInvalid("config", f"malformed TOML: {exc}") from None


def run_config(cfg: dict, base: Path, out: Path | None) -> tuple[int, dict]:
    """Execute one experiment; returns ``(exit code, json payload)`` and writes files under ``out``."""
    t0 = time.time()
    try:
        command = cfg.get("command")
        if not isinstance(command, str) or command not in EXPERIMENTS:
            raise ConfigInvalid("command", f"expected one of {sorted(EXPERIMENTS)}")
        seed = cfg.get("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int):
            raise ConfigInvalid("seed", "expected an integer")
        table = cfg.get("params", {})
        if not isinstance(table, dict):
            raise ConfigInvalid("params", "expected a table")
        extra = sorted(set(cfg) - {"command", "seed", "params", "out"})
        if extra:
            raise ConfigInvalid(extra[0], "unknown top-level key")
        p = Params(table, base)
        threads = apply_thread_cap()
        payload, files = EXPERIMENTS[command](p)
        p.check_unused()
        doc = {"command": command, "seed": seed, "config": p.echo(), "status": "ok", "result": payload}
        code = 0
    except CapbernError as exc:
        files = {}
        doc = {"command": cfg.get("command"), "status": "error", "error": exc.to_dict()}
        code = 2 if isinstance(exc, SOFT_FAILURES) else 1
        threads = None
    except ValueError as exc:
        files = {}
        doc = {"command": cfg.get("command"), "status": "error", "error": {"code": "INVALID_INPUT", "message": str(exc)}}
        code = 1
        threads = None
    if out is not None:
        write_atomic(out / "result.json", dumps(doc))
        for name, data in sorted(files.items()):
            write_atomic(out / name, data)
        log = f"command={doc['command']} exit={code} seconds={time.time() - t0:.3f} threads={threads}\n"
        write_atomic(out / "run.log", log)
    return code, doc


# --- click frontend -------------------------------------------------------------


def _finish(code: int, doc: dict) -> None:
    if code:
        err = doc.get("error", {})
        click.echo(f"{err.get('code', 'ERROR')}: {err.get('message', '')}", err=True)
    click.echo(dumps(doc), nl=False)
    sys.exit(code)


@click.group()
@click.version_option(package_name="artifact")
def main():
    """Capillary / one-phase Bernoulli verification experiments."""


@main.command("run")
@click.argument("config", type=click.Path(dir_okay=False, path_type=Path))
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), default=None,
              help="Output directory (overrides the config's 'out').")
def run_cmd(config: Path, out: Path | None):
    """Run the experiment described by a TOML CONFIG file."""
    try:
        cfg = load_config(config)
    except ConfigInvalid as exc:
        _finish(1, {"command": None, "status": "error", "error": exc.to_dict()})
        return
    if out is None:
        o = cfg.get("out", "results")
        out = Path(o) if Path(o).is_absolute() else config.parent / o
    code, doc = run_config(cfg, config.parent, out)
    _finish(code, doc)


def _direct(command: str, params: dict, out: Path | None):
    code, doc = run_config({"command": command, "params": params}, Path.cwd(), out)
    _finish(code, doc)


_out_opt = click.option("--out", type=click.Path(file_okay=False, path_type=Path), default=None)


@main.command("theta-threshold")
@click.option("--n", "n", type=int, required=True)
@click.option("--c", "c", type=float, default=1.0, show_default=True)
@_out_opt
def threshold_cmd(n, c, out):
    """Angle window near pi/2 on which the feasibility system has a witness."""
    _direct("theta-threshold", {"n": n, "c": c}, out)


@main.command("delta0")
@click.option("--n", "n", type=int, required=True)
@click.option("--Lambda", "Lambda", type=float, default=None)
@_out_opt
def delta0_cmd(n, Lambda, out):
    """Certified small-angle constant delta_0(n, Lambda)."""
    params = {"n": n} if Lambda is None else {"n": n, "Lambda": Lambda}
    _direct("delta0", params, out)


@main.command("simons-probe")
@click.option("--family", type=click.Choice(["flat", "clifford"]), default="clifford", show_default=True)
@click.option("--p", "p", type=int, default=1, show_default=True)
@click.option("--lambda", "lam", type=float, default=0.5, show_default=True)
@click.option("--r", "r", type=float, default=1.0, show_default=True)
@_out_opt
def simons_cmd(family, p, lam, r, out):
    """Evaluate both sides of the modified Simons inequality on an explicit cone."""
    _direct("simons-probe", {"family": family, "p": p if family == "clifford" else 0, "lambda": lam, "r": r}, out)


@main.command("render")
@click.argument("field_file", type=click.Path(dir_okay=False, path_type=Path))
@click.option("--level", "levels", type=float, multiple=True, default=(0.0,), show_default=True)
@click.option("--out", "out_file", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="SVG path; stdout when omitted.")
def render_cmd(field_file: Path, levels, out_file: Path | None):
    """Contour plot of a binary field file as SVG."""
    try:
        f = fieldio.load(field_file)
        svg = render.render_svg(f, list(levels))
    except CapbernError as exc:
        click.echo(f"{exc.code}: {exc.message}", err=True)
        sys.exit(1)
    except ValueError as exc:
        click.echo(f"INVALID_INPUT: {exc}", err=True)
        sys.exit(1)
    if out_file is None:
        click.echo(svg, nl=False)
    else:
        write_atomic(out_file, svg)


if __name__ == "__main__":  # pragma: no cover
    main()
