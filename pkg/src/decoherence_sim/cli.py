"""Command-line experiment runner.

Usage::

    decoherence-sim SUBCOMMAND [--config FILE] [--preset fig2] [--KEY VALUE ...]

Configuration files are flat ``key = value`` lines (``#`` comments).  Values
are resolved in the order preset < config file < command-line flags.  Every
run writes its CSV output plus ``<output>.manifest``, a config file that
replays the run (its ``[manifest]`` section is metadata and is ignored when
read back).
"""

import argparse
import configparser
import csv
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from ._grid import uniform_grid
from .cumulants import (
    decoherence_from_second_cumulant,
    quantum_second_cumulant_spin_boson,
)
from .dephasing_dynamics import (
    EnsembleConfig,
    FockBathSpec,
    TwoLevelInitialState,
    fock_oracle_qdf,
    purity_from_loschmidt,
    run_dephasing_ensemble,
)
from .dissipation import (
    DissipationRates,
    batch_rate_errors,
    extract_rates,
    propagate_lindblad,
    propagate_noise_master_equation,
    run_dissipative_noise_ensemble,
)
from .errors import DecoherenceSimError
from .noise_gen import ComplexWhite, OUProcess, estimate_autocorrelation, make_ou_stream
from .spectral_bath import (
    BathParameters,
    DiscreteModes,
    LorentzDrude,
    TabulatedSpectralDensity,
)

EXPERIMENTS = ("qdf-exact", "dephasing-compare", "noise-validate",
               "dissipation-compare", "oracle-check")
OUTPUT_DIR_ENV = "DECOHERENCE_SIM_OUTPUT_DIR"


class ConfigError(DecoherenceSimError, ValueError):
    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")


def _positive(v):
    return v > 0


def _non_negative(v):
    return v >= 0


def _unit_interval(v):
    return 0 <= v <= 1


def _float_list(text):
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    return [float(x) for x in str(text).replace(",", " ").split()]


def _bool(text):
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _str(text):
    return str(text).strip().strip('"')


@dataclass(frozen=True)
class Key:
    parse: object
    check: object = None
    help: str = ""


SCHEMA = {
    "experiment": Key(_str, lambda v: v in EXPERIMENTS, "experiment name"),
    "omega0": Key(float, _positive, "two-level transition frequency"),
    "lam": Key(float, _positive, "Lorentz-Drude coupling strength"),
    "beta": Key(float, _positive, "inverse temperature"),
    "omega_c": Key(float, _positive, "Lorentz-Drude cutoff frequency"),
    "high_temperature": Key(_bool, None, "use coth(beta w/2) -> 2/(beta w)"),
    "spectral_csv": Key(_str, None, "tabulated J(w) CSV with header omega,J"),
    "gamma_a": Key(float, _non_negative, "absorption rate"),
    "gamma_0": Key(float, _non_negative, "spontaneous emission rate"),
    "gamma": Key(float, _non_negative, "classical white-noise rate (default gamma_a)"),
    "excited_population": Key(float, _unit_interval, "initial |c1|^2 of the pure state"),
    "mode_frequencies": Key(_float_list, lambda v: len(v) > 0 and min(v) > 0,
                            "oracle bath mode frequencies (comma separated)"),
    "mode_couplings": Key(_float_list, lambda v: len(v) > 0, "oracle bath couplings"),
    "dt": Key(float, _positive, "time step"),
    "t_final": Key(float, _positive, "final time"),
    "n_traj": Key(int, lambda v: v >= 1, "number of trajectories"),
    "master_seed": Key(int, _non_negative, "master RNG seed"),
    "fock_cutoff": Key(int, lambda v: v >= 2, "Fock states per oracle mode (default auto)"),
    "max_lag": Key(int, lambda v: v >= 0, "largest autocorrelation lag (noise-validate)"),
    "n_jobs": Key(int, lambda v: v >= 1, "worker threads (results do not depend on it)"),
    "output_path": Key(_str, None, "CSV output path"),
}

REQUIRED = {
    "qdf-exact": ("beta", "dt", "t_final"),
    "dephasing-compare": ("lam", "beta", "omega_c", "dt", "t_final", "n_traj",
                          "master_seed"),
    "noise-validate": ("lam", "beta", "omega_c", "dt", "t_final", "master_seed"),
    "dissipation-compare": ("omega0", "gamma_a", "gamma_0", "dt", "t_final", "n_traj",
                            "master_seed"),
    "oracle-check": ("mode_frequencies", "mode_couplings", "beta", "dt", "t_final"),
}

DEFAULTS = {
    "high_temperature": False,
    "n_jobs": 1,
    "max_lag": 500,
}

PRESETS = {
    "fig2": {
        "omega0": 1.0,
        "lam": 0.5,
        "beta": 1.0,
        "omega_c": 1.0,
        "high_temperature": True,
        "n_traj": 2000,
        "dt": 0.002,
        "t_final": 10.0,
        "master_seed": 2019,
        "excited_population": 0.5,
    },
}


@dataclass
class RunConfig:
    experiment: str
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    @property
    def output_path(self):
        path = self.values.get("output_path")
        if path:
            return Path(path)
        return Path(os.environ.get(OUTPUT_DIR_ENV, ".")) / f"{self.experiment}.csv"


def read_config_file(path):
    """Flat ``key = value`` file; a trailing ``[manifest]`` section is ignored."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    text = Path(path).read_text()
    try:
        parser.read_string("[config]\n" + text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError("config", f"cannot parse {path}: {exc}") from None
    return dict(parser["config"])


def _coerce(key, raw):
    if key not in SCHEMA:
        raise ConfigError(key, "unknown configuration key")
    spec = SCHEMA[key]
    try:
        value = spec.parse(raw)
    except (TypeError, ValueError):
        raise ConfigError(key, f"cannot interpret {raw!r}") from None
    if spec.check is not None and not spec.check(value):
        raise ConfigError(key, f"value {value!r} out of range")
    return value


def parse_config(experiment, config_file=None, preset=None, overrides=None):
    """Resolve preset, file and flag values into a validated :class:`RunConfig`."""
    raw = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError("preset", f"unknown preset {preset!r}")
        raw.update(PRESETS[preset])
    if config_file is not None:
        raw.update(read_config_file(config_file))
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    values = {k: _coerce(k, v) for k, v in raw.items()}
    file_exp = values.pop("experiment", experiment)
    if experiment is None:
        experiment = file_exp
    if experiment not in EXPERIMENTS:
        raise ConfigError("experiment", f"unknown experiment {experiment!r}")
    if file_exp != experiment:
        raise ConfigError("experiment", f"config is for {file_exp!r}, not {experiment!r}")
    for key in REQUIRED[experiment]:
        if key not in values:
            raise ConfigError(key, f"required for {experiment}")
    for key, value in DEFAULTS.items():
        values.setdefault(key, value)
    if experiment == "qdf-exact" and "spectral_csv" not in values:
        for key in ("lam", "omega_c"):
            if key not in values:
                raise ConfigError(key, "required for qdf-exact without spectral_csv")
    if experiment == "oracle-check" and (
            len(values["mode_frequencies"]) != len(values["mode_couplings"])):
        raise ConfigError("mode_couplings", "needs one coupling per mode frequency")
    if values["t_final"] < values["dt"]:
        raise ConfigError("t_final", "must be at least dt")
    return RunConfig(experiment, values)


# --- output ------------------------------------------------------------------

def _fmt(x):
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return repr(float(x))


def write_csv(path, header, columns):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in zip(*columns):
            writer.writerow([_fmt(v) for v in row])


def _manifest_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, list):
        return ", ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_manifest(path, cfg, outputs, wall_time):
    lines = [f"experiment = {cfg.experiment}"]
    for key in sorted(cfg.values):
        lines.append(f"{key} = {_manifest_value(cfg.values[key])}")
    lines += ["", "[manifest]", f"tool = decoherence-sim {__version__}"]
    if "master_seed" in cfg.values:
        lines.append(f"master_seed = {cfg['master_seed']}")
    lines += [
        f"wall_time_s = {wall_time:.3f}",
        f"outputs = {', '.join(str(p) for p in outputs)}",
    ]
    Path(path).write_text("\n".join(lines) + "\n")


# --- experiments -------------------------------------------------------------

def _bath(cfg):
    if cfg.get("spectral_csv"):
        spectral = TabulatedSpectralDensity.from_csv(cfg["spectral_csv"])
    else:
        spectral = LorentzDrude(cfg["lam"], cfg["omega_c"])
    return BathParameters(cfg["beta"], spectral, high_temperature=cfg["high_temperature"])


def _initial_state(cfg, default):
    p = cfg.get("excited_population", default)
    return TwoLevelInitialState(math.sqrt(1.0 - p), math.sqrt(p))


def _run_qdf_exact(cfg, out):
    times = uniform_grid(cfg["t_final"], cfg["dt"])
    kappa = quantum_second_cumulant_spin_boson(_bath(cfg), times)
    phi = decoherence_from_second_cumulant(kappa)
    write_csv(out, ["t", "kappa", "phi_re", "phi_im"],
              [times, kappa.values, phi.values.real, phi.values.imag])
    return [out]


def _run_dephasing_compare(cfg, out):
    bath = _bath(cfg)
    init = _initial_state(cfg, 0.5)
    ens_cfg = EnsembleConfig(cfg["n_traj"], cfg["dt"], cfg["t_final"], cfg["master_seed"],
                             OUProcess.from_bath(bath))
    noisy = run_dephasing_ensemble(init, ens_cfg, n_jobs=cfg["n_jobs"])
    exact = decoherence_from_second_cumulant(
        quantum_second_cumulant_spin_boson(bath, noisy.times))
    purity = purity_from_loschmidt(init, np.clip(noisy.loschmidt, 0.0, 1.0))
    write_csv(out, ["t", "phi_noise_re", "phi_noise_im", "stderr", "phi_exact", "purity"],
              [noisy.times, noisy.values.real, noisy.values.imag, noisy.stderr,
               exact.values.real, purity])
    return [out]


def _run_noise_validate(cfg, out):
    spec = OUProcess.from_bath(_bath(cfg))
    n = int(round(cfg["t_final"] / cfg["dt"])) + 1
    if cfg["max_lag"] >= n:
        raise ConfigError("max_lag", f"must be below the number of samples ({n})")
    samples = make_ou_stream(spec, cfg["master_seed"], 0, cfg["dt"]).sample(n)
    est = estimate_autocorrelation(samples, cfg["max_lag"], dt=cfg["dt"])
    lags = np.arange(cfg["max_lag"] + 1)
    write_csv(out, ["lag", "empirical", "target", "stderr"],
              [lags, est.values, spec.correlation(est.times), est.stderr])
    return [out]


def _series_columns(series):
    return [series.rho_gg, series.rho_ee, series.rho_eg.real, series.rho_eg.imag,
            series.purity]


SERIES_HEADER = ["rho_gg", "rho_ee", "rho_eg_re", "rho_eg_im", "purity"]


def _run_dissipation_compare(cfg, out):
    omega0 = cfg["omega0"]
    rates = DissipationRates(cfg["gamma_a"], cfg["gamma_0"], omega0)
    gamma = cfg.get("gamma", rates.gamma_a)
    init = _initial_state(cfg, 0.8)
    dt, t_final = cfg["dt"], cfg["t_final"]
    quantum = propagate_lindblad(init, rates, dt, t_final)
    master = propagate_noise_master_equation(init, gamma, omega0, dt, t_final)
    ens_cfg = EnsembleConfig(cfg["n_traj"], dt, t_final, cfg["master_seed"],
                             ComplexWhite(gamma))
    ensemble = run_dissipative_noise_ensemble(init, gamma, omega0, ens_cfg,
                                              n_jobs=cfg["n_jobs"])
    header = ["t"] + [f"quantum_{h}" for h in SERIES_HEADER] + \
        [f"classical_{h}" for h in SERIES_HEADER]
    write_csv(out, header, [quantum.times] + _series_columns(quantum)
              + _series_columns(ensemble))
    stem = out.with_suffix("")
    written = [out]
    for name, series in (("lindblad", quantum), ("noise_me", master),
                         ("ensemble", ensemble)):
        path = Path(f"{stem}_{name}.csv")
        write_csv(path, ["t"] + SERIES_HEADER, [series.times] + _series_columns(series))
        written.append(path)
    q_fit = extract_rates(quantum.times, quantum.rho_eg, quantum.rho_ee)
    me_fit = extract_rates(master.times, master.rho_eg, master.rho_ee)
    c_fit = extract_rates(ensemble.times, ensemble.rho_eg, ensemble.rho_ee)
    c_err = batch_rate_errors(ensemble)
    rates_path = Path(f"{stem}_rates.csv")
    rows = [
        ("quantum_decay_rate", q_fit.decay_rate, 0.0),
        ("quantum_stationary_excited", q_fit.stationary_excited, 0.0),
        ("noise_me_decay_rate", me_fit.decay_rate, 0.0),
        ("noise_me_stationary_excited", me_fit.stationary_excited, 0.0),
        ("classical_decay_rate", c_fit.decay_rate, c_err.decay_rate),
        ("classical_stationary_excited", c_fit.stationary_excited,
         c_err.stationary_excited),
        ("rate_gap", q_fit.decay_rate - c_fit.decay_rate, c_err.decay_rate),
        ("expected_rate_gap", 0.5 * rates.gamma_0, 0.0),
    ]
    with open(rates_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["quantity", "value", "stderr"])
        for name, value, err in rows:
            writer.writerow([name, _fmt(value), _fmt(err)])
    written.append(rates_path)
    return written


def _run_oracle_check(cfg, out):
    times = uniform_grid(cfg["t_final"], cfg["dt"])
    freqs, gs = cfg["mode_frequencies"], cfg["mode_couplings"]
    fock = FockBathSpec(tuple(zip(freqs, gs)), cfg["beta"], cfg.get("fock_cutoff"))
    oracle = fock_oracle_qdf(fock, times)
    bath = BathParameters(cfg["beta"], DiscreteModes(tuple(freqs), tuple(gs)))
    cumulant = decoherence_from_second_cumulant(
        quantum_second_cumulant_spin_boson(bath, times))
    write_csv(out, ["t", "phi_oracle_re", "phi_oracle_im", "phi_cumulant", "abs_diff"],
              [times, oracle.values.real, oracle.values.imag, cumulant.values.real,
               np.abs(oracle.values - cumulant.values)])
    return [out]


RUNNERS = {
    "qdf-exact": _run_qdf_exact,
    "dephasing-compare": _run_dephasing_compare,
    "noise-validate": _run_noise_validate,
    "dissipation-compare": _run_dissipation_compare,
    "oracle-check": _run_oracle_check,
}


def run_experiment(cfg):
    """Run ``cfg`` and write its CSV outputs and manifest.

    Files are produced in a scratch directory next to the output and moved
    into place only after the run succeeds, so a failure leaves no partial
    outputs (and does not touch results of earlier runs).
    """
    out = cfg.output_path
    out.parent.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    with tempfile.TemporaryDirectory(dir=out.parent, prefix=".decoherence-sim-") as tmp:
        scratch = Path(tmp) / out.name
        produced = RUNNERS[cfg.experiment](cfg, scratch)
        final = [out.parent / p.name for p in produced]
        manifest = Path(f"{scratch}.manifest")
        write_manifest(manifest, cfg, final, time.perf_counter() - start)
        produced.append(manifest)
        final.append(out.parent / manifest.name)
        for src, dst in zip(produced, final):
            os.replace(src, dst)
    return final


def build_parser():
    parser = argparse.ArgumentParser(
        prog="decoherence-sim",
        description="Quantum decoherence functions versus classical-noise ensembles.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat key = value configuration file")
        p.add_argument("--preset", choices=sorted(PRESETS))
        for key, spec in SCHEMA.items():
            if key == "experiment":
                continue
            p.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None,
                           help=spec.help)
    return parser


def _error_line(kind, exc, key=None):
    payload = {"status": "error", "kind": kind, "message": str(exc)}
    if key is not None:
        payload["key"] = key
    return "error: " + json.dumps(payload, sort_keys=True)


def main(argv=None):
    args = build_parser().parse_args(argv)
    overrides = {k: getattr(args, k) for k in SCHEMA if k != "experiment"}
    try:
        cfg = parse_config(args.experiment, args.config, args.preset, overrides)
    except ConfigError as exc:
        print(_error_line("config", exc, exc.key), file=sys.stderr)
        return 2
    except OSError as exc:
        print(_error_line("config", exc), file=sys.stderr)
        return 2
    try:
        paths = run_experiment(cfg)
    except (DecoherenceSimError, OSError) as exc:
        print(_error_line(type(exc).__name__, exc, getattr(exc, "key", None)),
              file=sys.stderr)
        return 1
    for path in paths:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
