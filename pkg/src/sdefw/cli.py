"""Batch front end: config-driven convergence studies and the algebra
verification suite.

Config files are flat `key = value` text; `--set key=value` overrides.  Exit
codes: 0 all checks passed, 1 any check failed, 2 usage/config error.
"""

from __future__ import annotations

import sys
import time

import click
import numpy as np

from .extrapolation import WeightError, solve_weights
from .free_algebra import run_verification_suite
from .models import make_model, model_names, parse_payoff
from .randomness import parse_rng_spec
from .scheme_engine import (cost_estimate, estimate, make_source,
                            quadrature_expectation)

CSV_HEADER = "model,scheme,n,M,rng,E,err,stderr,elapsed_s,op_count"


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"config key {key!r}: {message}")


# -- config ------------------------------------------------------------------------


def parse_config(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected key = value, got {raw!r}")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def serialize_config(cfg: dict[str, str]) -> str:
    return "\n".join(f"{k} = {v}" for k, v in cfg.items()) + "\n"


_MODEL_PARAM_KEYS = {
    "heston": {"mu": float, "alpha": float, "theta_vol": float, "beta": float,
               "rho": float, "x1": float, "x2": float, "T": float, "K": float},
    "gbm": {"mu": float, "sigma": float, "x0": float},
    "gbm_asian": {"mu": float, "sigma": float, "x0": float},
}


class StudyConfig:
    """Validated study description."""

    def __init__(self, cfg: dict[str, str]):
        self.raw = dict(cfg)
        self.mode = cfg.get("mode", "mc")
        if self.mode not in ("mc", "qmc", "quadrature-oracle", "algebra-verify"):
            raise ConfigError("mode", f"unknown mode {self.mode!r}")
        if self.mode == "algebra-verify":
            self.m = int(cfg.get("m", 3))
            self.d = int(cfg.get("d", 2))
            self.degree = int(cfg["degree"]) if "degree" in cfg else None
            return

        self.model_name = cfg.get("model", "")
        if self.model_name not in model_names():
            raise ConfigError("model", f"need one of {model_names()}, "
                                       f"got {self.model_name!r}")
        keys = _MODEL_PARAM_KEYS[self.model_name]
        self.model_kwargs = {}
        for key, conv in keys.items():
            if key in cfg:
                cfg_key = key
                try:
                    self.model_kwargs[key] = conv(cfg[key])
                except ValueError:
                    raise ConfigError(cfg_key, f"cannot parse {cfg[key]!r}")
        if self.model_name == "heston":
            # study horizon comes from the model parameters
            self.T = self.model_kwargs.get("T", 1.0)
        else:
            self.T = float(cfg.get("T", 1.0))

        try:
            self.schemes = [
                solve_weights(tuple(int(t) for t in part.split(",")))
                for part in cfg.get("schemes", "1").split(";") if part.strip()
            ]
        except (ValueError, WeightError) as exc:
            raise ConfigError("schemes", str(exc))

        try:
            self.n_values = [int(v) for v in cfg.get("n", "1").split(",")]
        except ValueError:
            raise ConfigError("n", f"cannot parse {cfg.get('n')!r}")
        if (any(v < 1 for v in self.n_values)
                or self.n_values != sorted(set(self.n_values))):
            raise ConfigError("n", "values must be positive and increasing")

        self.M = int(cfg.get("M", "10000"))
        self.payoff = cfg.get("payoff", "default")
        self.coupling = cfg.get("coupling", "independent")
        if self.coupling not in ("independent", "reuse"):
            raise ConfigError("coupling", f"got {self.coupling!r}")
        self.reference = float(cfg["reference"]) if "reference" in cfg else None
        self.nodes = int(cfg.get("nodes", "16"))
        self.drift_overrides = {}
        if "drift_tableau" in cfg and cfg["drift_tableau"]:
            for part in cfg["drift_tableau"].split(";"):
                idx, _, name = part.partition(":")
                self.drift_overrides[int(idx)] = name.strip()

        rng = cfg.get("rng", "pseudo:0")
        try:
            self.rng_kwargs = parse_rng_spec(rng)
        except Exception as exc:
            raise ConfigError("rng", str(exc))
        if self.mode == "qmc" and self.rng_kwargs["kind"] != "sobol":
            raise ConfigError("rng", "qmc mode requires a sobol source")
        if self.mode == "mc" and self.rng_kwargs["kind"] != "pseudo":
            raise ConfigError("rng", "mc mode requires a pseudo source")

        if self.mode == "quadrature-oracle":
            model = make_model(self.model_name, **self.model_kwargs)
            if model.d != 1:
                raise ConfigError("model", "quadrature-oracle needs a d=1 model")
            worst = max(s.thetas[-1] for s in self.schemes) * self.n_values[-1]
            if worst > 8:
                raise ConfigError("n", f"theta_max*n = {worst} exceeds the "
                                       "quadrature budget of 8 dimensions")
        if self.mode in ("mc", "qmc") and self.reference is None:
            raise ConfigError("reference", "required to report errors in "
                                           f"{self.mode} mode")


# -- study runner -------------------------------------------------------------------


def run_study(config: StudyConfig, workers: int = 1):
    """Returns (csv_lines, summary_lines, errors_by_scheme)."""
    model = make_model(config.model_name, **config.model_kwargs)
    x0 = model.params["x0"]
    lines = [CSV_HEADER]
    errors: dict[str, list[tuple[int, float]]] = {}
    for scheme in config.schemes:
        for n in config.n_values:
            if config.mode == "quadrature-oracle":
                t0 = time.perf_counter()
                payoff = parse_payoff(model, config.payoff)
                res = quadrature_expectation(
                    model, scheme, config.T, x0, n, nodes=config.nodes,
                    tableau_overrides=config.drift_overrides, payoff=payoff)
                elapsed = time.perf_counter() - t0
                value = res["value"]
                err = (abs(value - config.reference)
                       if config.reference is not None else None)
                err_s = "" if err is None else repr(err)
                lines.append(f"{model.name},{scheme.label()},{n},,quadrature,"
                             f"{value!r},{err_s},,{elapsed:.3f},")
            else:
                source = make_source(config.rng_kwargs, scheme, n, model.d,
                                     config.coupling)
                rep = estimate(model, scheme, config.T, x0, n, config.M,
                               source, coupling=config.coupling,
                               workers=workers, payoff_key=config.payoff,
                               tableau_overrides=config.drift_overrides or None,
                               model_kwargs=config.model_kwargs)
                rep.counters["cost_units"] = int(cost_estimate(
                    scheme, n, config.M, model.d, 1, 1, 1))
                value, err = rep.value, abs(rep.value - config.reference)
                lines.extend(rep.csv_rows(config.reference))
            if config.reference is not None:
                errors.setdefault(scheme.label(), []).append((n, err))

    summary = []
    for label, pts in errors.items():
        if len(pts) >= 2 and all(e > 0 for _, e in pts):
            ns = np.log([p[0] for p in pts])
            es = np.log([p[1] for p in pts])
            slope = float(np.polyfit(ns, es, 1)[0])
            summary.append(f"scheme {label}: fitted error slope {slope:.2f} "
                           f"over n={[p[0] for p in pts]}")
        else:
            summary.append(f"scheme {label}: slope not fitted (need >= 2 "
                           "positive errors)")
    return lines, summary, errors


def emit_plotdata(errors: dict[str, list[tuple[int, float]]]) -> list[str]:
    """log10(n), log10(error) series per scheme, with a fitted slope."""
    out = []
    for label, pts in errors.items():
        if len(pts) < 2:
            out.append(f"# scheme {label}: skipped (need >= 2 points)")
            continue
        ns = np.log10([p[0] for p in pts])
        es = np.log10([p[1] for p in pts])
        slope = float(np.polyfit(ns, es, 1)[0])
        out.append(f"# scheme {label} slope={slope:.2f}")
        out.extend(f"{x:.6f} {y:.6f}" for x, y in zip(ns, es))
    return out


# -- CLI ----------------------------------------------------------------------------


@click.group()
def main():
    """Weak-approximation toolkit for Stratonovich SDEs."""


@main.command("run")
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
              help="Override a config key.")
@click.option("--workers", default=1, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Write the CSV table here (default: stdout).")
@click.option("--plot-data", type=click.Path(dir_okay=False), default=None,
              help="Also write log-log plot data here.")
def run_cmd(config_path, overrides, workers, out, plot_data):
    """Run the study described by a config file."""
    try:
        with open(config_path) as fh:
            cfg = parse_config(fh.read())
        for item in overrides:
            if "=" not in item:
                raise ConfigError("--set", f"expected KEY=VALUE, got {item!r}")
            key, _, value = item.partition("=")
            cfg[key.strip()] = value.strip()
        config = StudyConfig(cfg)
    except (ConfigError, ValueError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)

    if config.mode == "algebra-verify":
        sys.exit(_verify(config.m, config.d, config.degree))

    lines, summary, errors = run_study(config, workers=workers)
    text = "\n".join(lines) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
        click.echo(f"wrote {out}")
    else:
        click.echo(text, nl=False)
    for line in summary:
        click.echo(line)
    if plot_data:
        with open(plot_data, "w") as fh:
            fh.write("\n".join(emit_plotdata(errors)) + "\n")
        click.echo(f"wrote {plot_data}")


def _verify(m: int, d: int, degree) -> int:
    results = run_verification_suite(m, d, degree)
    ok = True
    for res in results:
        click.echo(res.line())
        ok = ok and res.passed
    click.echo("ALL CHECKS PASSED" if ok else "CHECK FAILURES PRESENT")
    return 0 if ok else 1


@main.command("verify-algebra")
@click.option("--m", default=3, show_default=True,
              help="Largest extrapolation order parameter to verify.")
@click.option("--d", default=2, show_default=True,
              help="Largest number of diffusion letters.")
@click.option("--degree", default=None, type=int,
              help="Truncation degree (default: 2m per scheme).")
def verify_cmd(m, d, degree):
    """Run the exact algebraic identity checks."""
    sys.exit(_verify(m, d, degree))


if __name__ == "__main__":
    main()
