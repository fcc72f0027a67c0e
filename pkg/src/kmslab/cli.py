"""Configuration-driven experiment runner.

    kmslab run --config experiments/kms_free.toml [--seed 7] [--samples 20000]
               [--out runs/kms_free] [--verbose]

A config file (TOML primary, JSON accepted by extension) names one experiment
kind, a mandatory seed, and the blocks that kind needs:

    kind = "kms-gibbs"
    seed = 7

    [sampler]
    beta = 1.0
    d = 1
    n = 8
    nsamples = 100000

    [interaction]
    variant = "nls1d"
    power = 4

Each run writes report.json and summary.csv into the output directory
(default runs/<config stem>), atomically, with no timestamps: rerunning the
same config and seed produces byte-identical files. The exit status encodes
the scientific verdict: 0 iff every check passed, 1 if any failed, 2 for
config errors, 3 for runtime failures. The KMSLAB_WORKERS environment
variable only changes sampling chunk sizes (estimates never read it);
reported numbers are invariant to it.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import re
import sys
import tempfile
from pathlib import Path

import click
import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from kmslab._stats import ResidualReport
from kmslab.estimates import (
    BoundCheck,
    cauchy_decay_check,
    cauchy_presets,
    conv_check,
    hypercontractivity_check,
)
from kmslab.finitedim import (
    fd_coordinate,
    fd_harmonic,
    fd_quartic,
    fd_trig,
    finite_dim_check,
    perturbation_factor,
)
from kmslab.flow import FlowConfig, liouville_drift
from kmslab.gibbs import gibbs_weights, weights_summary
from kmslab.interactions import InteractionSpec, PotentialSpec
from kmslab.kms import (
    CylinderFunctional,
    default_probe_battery,
    density_ode_residual,
    hierarchy_residual,
    ibp_residual,
    kms_residual_bracket,
    kms_residual_exponential,
    stationarity_residual,
)
from kmslab.lattice import SpectralField, build_lattice
from kmslab.sampler import (
    SamplerConfig,
    basis_probes,
    gaussian_diagnostics,
    sample_free,
    sample_wave_pair,
)

SCHEMA_VERSION = 1

KINDS = (
    "gaussian-diagnostics",
    "kms-free",
    "kms-gibbs",
    "kms-local",
    "hierarchy",
    "stationarity",
    "ibp",
    "density-ode",
    "finite-dim",
    "liouville",
    "estimates",
)


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


_MISSING = object()


def _field(table, key, types, where, default=_MISSING, positive=False):
    if key not in table:
        if default is _MISSING:
            raise ConfigError(f"{where}.{key}: required")
        return default
    val = table[key]
    if types is float and isinstance(val, int) and not isinstance(val, bool):
        val = float(val)
    if not isinstance(val, types) or isinstance(val, bool) and types is not bool:
        tname = types.__name__ if isinstance(types, type) else "/".join(
            t.__name__ for t in types
        )
        raise ConfigError(f"{where}.{key}: expected {tname}, got {val!r}")
    if positive and not val > 0:
        raise ConfigError(f"{where}.{key}: must be positive, got {val!r}")
    return val


def _subtable(cfg, key, required=False):
    block = cfg.get(key)
    if block is None:
        if required:
            raise ConfigError(f"{key}: block required for this experiment kind")
        return None
    if not isinstance(block, dict):
        raise ConfigError(f"{key}: expected a table")
    return block


def load_config(path) -> dict:
    p = Path(path)
    try:
        raw = p.read_bytes()
    except OSError as exc:
        raise ConfigError(f"config: cannot read {p}: {exc}") from exc
    if p.suffix.lower() == ".json":
        try:
            cfg = json.loads(raw.decode())
        except ValueError as exc:
            raise ConfigError(f"config: invalid JSON in {p}: {exc}") from exc
    elif p.suffix.lower() == ".toml":
        try:
            cfg = tomllib.loads(raw.decode())
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config: invalid TOML in {p}: {exc}") from exc
    else:
        raise ConfigError(f"config: unknown extension {p.suffix!r} (use .toml or .json)")
    if not isinstance(cfg, dict):
        raise ConfigError("config: top level must be a table")
    return cfg


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()


# ---------------------------------------------------------------------------
# config -> domain objects


def _potential_from(block) -> PotentialSpec:
    kind = _field(block, "kind", str, "interaction.potential")
    kwargs = {"kind": kind}
    if "amplitude" in block:
        kwargs["amplitude"] = _field(block, "amplitude", float, "interaction.potential")
    if "decay" in block:
        kwargs["decay"] = _field(block, "decay", float, "interaction.potential")
    if "entries" in block:
        entries = block["entries"]
        if not isinstance(entries, list):
            raise ConfigError("interaction.potential.entries: expected a list")
        kwargs["entries"] = tuple(
            (tuple(int(x) for x in k), float(v)) for k, v in entries
        )
    if "bound" in block:
        kwargs["bound"] = tuple(float(x) for x in block["bound"])
    try:
        return PotentialSpec(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"interaction.potential: {exc}") from exc


def _interaction_from(cfg, sampler_block=None, required=False) -> InteractionSpec | None:
    block = _subtable(cfg, "interaction", required=required)
    if block is None:
        return None

    def inherited(key, types, positive=False):
        if key in block:
            val = _field(block, key, types, "interaction", positive=positive)
            if sampler_block is not None and key in sampler_block:
                other = sampler_block[key]
                if float(other) != float(val):
                    raise ConfigError(
                        f"interaction.{key}: {val!r} conflicts with sampler.{key}={other!r}"
                    )
            return val
        if sampler_block is not None and key in sampler_block:
            return _field(sampler_block, key, types, "sampler", positive=positive)
        raise ConfigError(f"interaction.{key}: required (or set sampler.{key})")

    kwargs = {
        "variant": _field(block, "variant", str, "interaction"),
        "beta": inherited("beta", float, positive=True),
        "d": inherited("d", int),
        "n": inherited("n", int),
    }
    if "power" in block:
        kwargs["power"] = _field(block, "power", int, "interaction")
    if "focusing" in block:
        kwargs["focusing"] = _field(block, "focusing", bool, "interaction")
    if "mass_cutoff" in block:
        kwargs["mass_cutoff"] = _field(
            block, "mass_cutoff", float, "interaction", positive=True
        )
    pot = block.get("potential")
    if pot is not None:
        if not isinstance(pot, dict):
            raise ConfigError("interaction.potential: expected a table")
        kwargs["potential"] = _potential_from(pot)
    try:
        return InteractionSpec(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"interaction: {exc}") from exc


def _ensemble_from(cfg, wave=False):
    block = _subtable(cfg, "sampler", required=True)
    beta = _field(block, "beta", float, "sampler", positive=True)
    d = _field(block, "d", int, "sampler")
    n = _field(block, "n", int, "sampler")
    nsamples = _field(block, "nsamples", int, "sampler", positive=True)
    stream = _field(block, "stream", int, "sampler", default=0)
    if d not in (1, 2, 3):
        raise ConfigError(f"sampler.d: must be 1, 2 or 3, got {d}")
    if n < 0:
        raise ConfigError(f"sampler.n: must be >= 0, got {n}")
    try:
        lattice = build_lattice(d, n)
        sc = SamplerConfig(beta=beta, lattice=lattice, seed=cfg["seed"], stream=stream)
        ens = sample_wave_pair(sc, nsamples) if wave else sample_free(sc, nsamples)
    except ValueError as exc:
        raise ConfigError(f"sampler: {exc}") from exc
    return ens


def _options(cfg) -> dict:
    return _subtable(cfg, "options") or {}


def _multiplier(cfg) -> float:
    return _field(_options(cfg), "multiplier", float, "options", default=3.0,
                  positive=True)


def _unit_probe(lattice, index, imaginary=False):
    c = np.zeros(lattice.size, dtype=np.complex128)
    c[index % lattice.size] = 1j if imaginary else 1.0
    return SpectralField(lattice, c)


# ---------------------------------------------------------------------------
# experiment runners; each returns (results, metadata, extra_tables)


def run_gaussian(cfg):
    opts = _options(cfg)
    wave = _field(opts, "wave", bool, "options", default=False)
    ens = _ensemble_from(cfg, wave=wave)
    probes = basis_probes(ens.lattice, wave=wave)
    reports = gaussian_diagnostics(ens, probes, multiplier=_multiplier(cfg))
    return reports, {"lattice_size": ens.lattice.size}, {}


def run_kms_free(cfg):
    opts = _options(cfg)
    wave = _field(opts, "wave", bool, "options", default=False)
    ens = _ensemble_from(cfg, wave=wave)
    mult = _multiplier(cfg)
    reports = [
        kms_residual_exponential(ens, p1, p2, multiplier=mult, name=f"kms_exp[{tag}]")
        for tag, p1, p2 in default_probe_battery(ens.lattice, wave=wave)
    ]
    return reports, {}, {}


def run_kms_gibbs(cfg):
    ens = _ensemble_from(cfg)
    spec = _interaction_from(cfg, _subtable(cfg, "sampler"), required=True)
    if spec.is_wave:
        raise ConfigError("interaction.variant: wave variants take the kms-free path")
    try:
        gw = gibbs_weights(ens, spec)
    except ValueError as exc:
        raise ConfigError(f"sampler/interaction: {exc}") from exc
    mult = _multiplier(cfg)
    reports = []
    for tag, p1, p2 in default_probe_battery(ens.lattice):
        reports.append(
            kms_residual_exponential(
                ens, p1, p2, spec=spec, weights=gw, multiplier=mult,
                name=f"kms_exp[{tag}]",
            )
        )
        reports.append(
            kms_residual_bracket(
                ens,
                CylinderFunctional("exponential", p1),
                CylinderFunctional("exponential", p2),
                spec=spec,
                weights=gw,
                multiplier=mult,
                name=f"kms_bracket[{tag}]",
            )
        )
    return reports, {"weights": weights_summary(gw, spec, ens.nsamples)}, {}


def run_kms_local(cfg):
    ens = _ensemble_from(cfg)
    spec = _interaction_from(cfg, _subtable(cfg, "sampler"), required=True)
    opts = _options(cfg)
    if spec.mass_cutoff is None:
        raise ConfigError("interaction.mass_cutoff: required for kms-local")
    radius = _field(opts, "radius", float, "options", default=spec.mass_cutoff,
                    positive=True)
    nprobes = _field(opts, "nprobes", int, "options", default=3, positive=True)
    try:
        gw = gibbs_weights(ens, spec)
    except ValueError as exc:
        raise ConfigError(f"sampler/interaction: {exc}") from exc
    mult = _multiplier(cfg)
    radial = CylinderFunctional("radial", radius=radius)
    reports = []
    for i in range(nprobes):
        probe = _unit_probe(ens.lattice, i, imaginary=i % 2 == 1)
        cyl = CylinderFunctional("exponential", probe)
        reports.append(
            kms_residual_bracket(
                ens, radial, cyl, spec=spec, weights=gw, multiplier=mult,
                name=f"kms_bracket[radial|exp{i}]",
            )
        )
        reports.append(
            kms_residual_bracket(
                ens, cyl, radial, spec=spec, weights=gw, multiplier=mult,
                name=f"kms_bracket[exp{i}|radial]",
            )
        )
    meta = {"weights": weights_summary(gw, spec, ens.nsamples), "radius": radius}
    return reports, meta, {}


def _optional_weights(cfg, ens):
    spec = _interaction_from(cfg, _subtable(cfg, "sampler"))
    if spec is None:
        return None, None, {}
    if spec.is_wave != ens.is_wave:
        raise ConfigError("interaction.variant: field type conflicts with sampler")
    try:
        gw = gibbs_weights(ens, spec)
    except ValueError as exc:
        raise ConfigError(f"sampler/interaction: {exc}") from exc
    return spec, gw, {"weights": weights_summary(gw, spec, ens.nsamples)}


def run_hierarchy(cfg):
    ens = _ensemble_from(cfg)
    spec, gw, meta = _optional_weights(cfg, ens)
    opts = _options(cfg)
    orders = opts.get("orders", [0, 1, 2])
    if not isinstance(orders, list) or not all(
        isinstance(p, int) and p >= 0 for p in orders
    ):
        raise ConfigError("options.orders: expected a list of integers >= 0")
    npairs = _field(opts, "npairs", int, "options", default=2, positive=True)
    mult = _multiplier(cfg)
    lat = ens.lattice
    pairs = [(f"e{i}|e{i}", _unit_probe(lat, i), _unit_probe(lat, i))
             for i in range(npairs)]
    pairs.append(("e0|e1", _unit_probe(lat, 0), _unit_probe(lat, 1)))
    reports = [
        hierarchy_residual(
            ens, p1, p2, p, spec=spec, weights=gw, multiplier=mult,
            name=f"hierarchy[p={p},{tag}]",
        )
        for p in orders
        for tag, p1, p2 in pairs
    ]
    return reports, meta, {}


def run_stationarity(cfg):
    ens = _ensemble_from(cfg)
    spec, gw, meta = _optional_weights(cfg, ens)
    opts = _options(cfg)
    nprobes = _field(opts, "nprobes", int, "options", default=3, positive=True)
    mult = _multiplier(cfg)
    reports = []
    for i in range(nprobes):
        for imag, pre in ((False, "e"), (True, "ie")):
            probe = _unit_probe(ens.lattice, i, imaginary=imag)
            reports.append(
                stationarity_residual(
                    ens, probe, spec=spec, weights=gw, multiplier=mult,
                    name=f"stationarity[{pre}{i}]",
                )
            )
    return reports, meta, {}


def run_ibp(cfg):
    ens = _ensemble_from(cfg)
    mult = _multiplier(cfg)
    lat = ens.lattice
    e0, e1 = _unit_probe(lat, 0), _unit_probe(lat, 1)
    mix = SpectralField(lat, (e0.coeffs + e1.coeffs) / np.sqrt(2.0))
    battery = [
        ("cos0|sin1|e0", CylinderFunctional("cos", e0), CylinderFunctional("sin", e1), e0),
        ("sin0|cos0|e1", CylinderFunctional("sin", e0), CylinderFunctional("cos", e0), e1),
        ("mom2_0|exp1|e0", CylinderFunctional("moment", e0, power=2),
         CylinderFunctional("exponential", e1), e0),
        ("exp0|mom1_1|mix", CylinderFunctional("exponential", e0),
         CylinderFunctional("moment", e1, power=1), mix),
        ("cos1|mom2_1|e1", CylinderFunctional("cos", e1),
         CylinderFunctional("moment", e1, power=2), e1),
        ("expmix|cos0|e0", CylinderFunctional("exponential", mix),
         CylinderFunctional("cos", e0), e0),
    ]
    reports = [
        ibp_residual(ens, F, G, phi, multiplier=mult, name=f"ibp[{tag}]")
        for tag, F, G, phi in battery
    ]
    return reports, {}, {}


def run_density_ode(cfg):
    ens = _ensemble_from(cfg)
    spec = _interaction_from(cfg, _subtable(cfg, "sampler"), required=True)
    opts = _options(cfg)
    mass_shift = _field(opts, "mass_shift", float, "options", default=0.0)
    tol = _field(opts, "tol", float, "options", default=1e-8, positive=True)
    s = _field(opts, "sobolev_s", float, "options", default=1.0)
    step = _field(opts, "step", float, "options", default=1e-5, positive=True)
    report = density_ode_residual(
        spec, ens, mass_shift=mass_shift, s=s, step=step, tol=tol
    )
    return [report], {}, {}


def _fd_report(name, result, claim, threshold):
    passed = result.gap <= threshold if claim == "exact" else result.gap > threshold
    return ResidualReport(
        name=name,
        estimate=complex(result.gap),
        stderr=(0.0, 0.0),
        nsamples=result.level,
        multiplier=0.0,
        passed=bool(passed and result.converged),
        details={
            "lhs": result.lhs,
            "rhs": result.rhs,
            "claim": claim,
            "threshold": threshold,
            "gaps_by_level": result.gaps_by_level,
        },
    )


def run_finite_dim(cfg):
    opts = _options(cfg)
    n = _field(opts, "n", int, "options", default=1, positive=True)
    beta = _field(opts, "beta", float, "options", default=1.0, positive=True)
    levels = opts.get("levels", [64, 96, 144] if n == 1 else [48, 64])
    if not isinstance(levels, list) or len(levels) < 2:
        raise ConfigError("options.levels: expected a list of at least two grid sizes")
    levels = tuple(int(m) for m in levels)
    scale = _field(opts, "perturbation", float, "options", default=0.2)
    detect = _field(opts, "detect_threshold", float, "options", default=1e-3,
                    positive=True)
    coord = (fd_coordinate(n, 0), fd_coordinate(n, 0, conjugate=True))

    def head(a, b):
        vec_a, vec_b = np.zeros(n), np.zeros(n)
        vec_a[0], vec_b[0] = a, b
        return vec_a, vec_b

    t1, s1 = head(0.7, -0.3)
    t2, s2 = head(-0.4, 0.9)
    trig = (fd_trig(t1, s1, "sin", phase=0.4), fd_trig(t2, s2, "cos", phase=-0.7))
    reports = []
    for hname, h in (("harmonic", fd_harmonic(n)), ("quartic", fd_quartic(n))):
        for pname, (F, G) in (("coord", coord), ("trig", trig)):
            res = finite_dim_check(F, G, h, beta=beta, n=n, levels=levels)
            reports.append(_fd_report(f"findim[{hname}|{pname}]", res, "exact", 1e-8))
        # The shipped perturbation 1 + scale*x_1 is odd in x_1, invisible to
        # the parity-even coordinate probes; the phase-shifted trig probes
        # are the detection instrument.
        res = finite_dim_check(
            trig[0], trig[1], h, beta=beta, n=n, levels=levels,
            density_factor=perturbation_factor(scale),
        )
        reports.append(
            _fd_report(f"findim[{hname}|perturbed]", res, "detect", detect)
        )
    return reports, {"levels": list(levels)}, {}


def run_liouville(cfg):
    ens = _ensemble_from(cfg)
    spec, gw, meta = _optional_weights(cfg, ens)
    opts = _options(cfg)
    dt = _field(opts, "dt", float, "options", positive=True)
    t_final = _field(opts, "t_final", float, "options", positive=True)
    nprobes = _field(opts, "nprobes", int, "options", default=2, positive=True)
    mult = _multiplier(cfg)
    try:
        fc = FlowConfig(spec=spec, dt=dt, t_final=t_final)
    except ValueError as exc:
        raise ConfigError(f"options: {exc}") from exc
    reports = []
    for i in range(nprobes):
        probe = _unit_probe(ens.lattice, i, imaginary=i % 2 == 1)
        kind = "cos" if i % 2 == 0 else "sin"
        reports.append(
            liouville_drift(
                ens, CylinderFunctional(kind, probe), fc, weights=gw,
                multiplier=mult, name=f"liouville[{kind}{i}]",
            )
        )
    return reports, meta, {}


def _conv_table_name(check: BoundCheck) -> str:
    safe = re.sub(r"[^A-Za-z0-9_.-]+", "_", check.name).strip("_")
    return f"{safe}.csv"


def run_estimates(cfg):
    block = _subtable(cfg, "estimates", required=True)
    reports: list[BoundCheck] = []
    tables = {}
    conv_blocks = block.get("conv", [])
    if not isinstance(conv_blocks, list):
        raise ConfigError("estimates.conv: expected an array of tables")
    for i, cb in enumerate(conv_blocks):
        where = f"estimates.conv[{i}]"
        if not isinstance(cb, dict):
            raise ConfigError(f"{where}: expected a table")
        d = _field(cb, "d", int, where)
        delta = _field(cb, "delta", float, where)
        M = _field(cb, "M", int, where, default=0)
        rho = _field(cb, "rho", float, where, default=0.0)
        probes = cb.get("probes")
        if probes is not None:
            probes = tuple(int(p) for p in probes)
        try:
            check = conv_check(d, delta, M=M, rho=rho, probes=probes)
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from exc
        reports.append(check)
        tables[_conv_table_name(check)] = (
            ("n", "partial_sum", "ratio"),
            check.table_rows(),
        )
    hyper = block.get("hyper")
    if hyper is not None:
        where = "estimates.hyper"
        if not isinstance(hyper, dict):
            raise ConfigError(f"{where}: expected a table")
        degrees = hyper.get("degrees", [0, 1, 2, 3])
        powers = hyper.get("powers", [4, 6])
        nh = _field(hyper, "nsamples", int, where, default=200_000, positive=True)
        for m in degrees:
            for p in powers:
                try:
                    reports.append(
                        hypercontractivity_check(
                            m, p, nsamples=nh, seed=cfg["seed"], stream=50 + m
                        )
                    )
                except ValueError as exc:
                    raise ConfigError(f"{where}: {exc}") from exc
    cauchy = block.get("cauchy")
    if cauchy is not None:
        where = "estimates.cauchy"
        if not isinstance(cauchy, dict):
            raise ConfigError(f"{where}: expected a table")
        presets = cauchy_presets()
        names = cauchy.get("presets", sorted(presets))
        nc = _field(cauchy, "nsamples", int, where, default=1500, positive=True)
        overrides = cauchy.get("nsamples_overrides", {})
        for name in names:
            if name not in presets:
                raise ConfigError(
                    f"{where}.presets: unknown preset {name!r} "
                    f"(have {sorted(presets)})"
                )
            nuse = int(overrides.get(name, nc))
            reports.append(
                cauchy_decay_check(
                    **presets[name], nsamples=nuse, seed=cfg["seed"], stream=60,
                    name=name,
                )
            )
    if not reports:
        raise ConfigError("estimates: no checks requested (add conv/hyper/cauchy)")
    return reports, {}, tables


RUNNERS = {
    "gaussian-diagnostics": run_gaussian,
    "kms-free": run_kms_free,
    "kms-gibbs": run_kms_gibbs,
    "kms-local": run_kms_local,
    "hierarchy": run_hierarchy,
    "stationarity": run_stationarity,
    "ibp": run_ibp,
    "density-ode": run_density_ode,
    "finite-dim": run_finite_dim,
    "liouville": run_liouville,
    "estimates": run_estimates,
}


# ---------------------------------------------------------------------------
# report emission


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _summary_row(r):
    if isinstance(r, BoundCheck):
        return (r.name, f"{r.worst!r}", "0.0", "0.0", "0.0", r.passed)
    return (
        r.name,
        f"{r.estimate.real!r}",
        f"{r.estimate.imag!r}",
        f"{r.stderr[0]!r}",
        f"{r.stderr[1]!r}",
        r.passed,
    )


def emit_report(results, cfg: dict, outdir: Path, metadata=None, tables=None) -> bool:
    """Write report.json and summary.csv (plus any extra tables) atomically.

    Returns True iff every result passed. No timestamps anywhere: identical
    (config, seed) runs produce byte-identical files.
    """
    if not results:
        raise ConfigError("results: nothing to report")
    outdir.mkdir(parents=True, exist_ok=True)
    all_passed = all(r.passed for r in results)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "kind": cfg["kind"],
        "seed": cfg["seed"],
        "config_hash": config_hash(cfg),
        "config": cfg,
        "metadata": metadata or {},
        "results": [r.to_dict() for r in results],
        "all_passed": all_passed,
    }
    _atomic_write(outdir / "report.json", json.dumps(payload, indent=2, sort_keys=True) + "\n")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("name", "value_re", "value_im", "stderr_re", "stderr_im", "passed"))
    for r in results:
        writer.writerow(_summary_row(r))
    _atomic_write(outdir / "summary.csv", buf.getvalue())
    for fname, (header, rows) in (tables or {}).items():
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([f"{v!r}" if isinstance(v, float) else v for v in row])
        _atomic_write(outdir / fname, buf.getvalue())
    return all_passed


# ---------------------------------------------------------------------------
# command line


@click.group()
def main():
    """Spectral Monte Carlo checks of classical KMS equilibrium."""


@main.command(name="run")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=False, dir_okay=False),
              help="TOML (or JSON) experiment description.")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--samples", type=int, default=None,
              help="Override the Monte Carlo sample count.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
              help="Report directory (default runs/<config stem>).")
@click.option("--verbose", is_flag=True, help="Print every check line.")
def run_command(config_path, seed, samples, out_dir, verbose):
    """Run one configured experiment and write its reports."""
    try:
        cfg = load_config(config_path)
        kind = _field(cfg, "kind", str, "config")
        if kind not in KINDS:
            raise ConfigError(
                f"kind: unknown experiment {kind!r}; expected one of {', '.join(KINDS)}"
            )
        if seed is not None:
            cfg["seed"] = seed
        _field(cfg, "seed", int, "config")
        if samples is not None:
            if samples < 1:
                raise ConfigError("samples: override must be >= 1")
            if "sampler" in cfg:
                cfg["sampler"]["nsamples"] = samples
            elif kind == "estimates":
                est = cfg.get("estimates", {})
                for key in ("hyper", "cauchy"):
                    if key in est:
                        est[key]["nsamples"] = samples
                        est[key].pop("nsamples_overrides", None)
            else:
                raise ConfigError("samples: this experiment has no sample count")
        results, metadata, tables = RUNNERS[kind](cfg)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)
    except Exception as exc:  # downstream failure: name the module
        mod = getattr(type(exc), "__module__", "")
        click.echo(f"runtime error in {kind} ({mod or 'kmslab'}): {exc}", err=True)
        sys.exit(3)
    outdir = Path(out_dir) if out_dir else Path("runs") / Path(config_path).stem
    try:
        ok = emit_report(results, cfg, outdir, metadata, tables)
    except OSError as exc:
        click.echo(f"cannot write report to {outdir}: {exc}", err=True)
        sys.exit(3)
    if verbose:
        for r in results:
            click.echo(r.summary())
    npass = sum(1 for r in results if r.passed)
    click.echo(f"{kind}: {npass}/{len(results)} checks passed -> {outdir}")
    sys.exit(0 if ok else 1)


if __name__ == "__main__":
    main()
