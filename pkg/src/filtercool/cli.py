"""Command-line front end: dispatches to the computational modules and
writes CSV artifacts.

Subcommands
-----------
filter-response   impulse response of a filter model     -> t,h_1,...,h_n
steady-state      asymptotic energy of one protocol      -> one summary row
evolve            moment-system transient (RK4)          -> t,<labels...>
trajectory        Monte Carlo ensemble of one protocol   -> t,mean_energy,...
phase-diagram     (gamma, Omega) winner map              -> phase CSV

Every numeric flag can also be supplied through ``--config FILE``, a flat
JSON object whose keys equal the flag names (flags override the file).
All randomness is seeded explicitly, so identical configurations produce
byte-identical output.  Exit codes: 0 success, 2 argument/config error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import sys
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from .filters import (
    FilterModel,
    KernelSpec,
    bandpass,
    impulse_response,
    kernel_filter,
    lowpass_cascade,
)
from .moment_systems import (
    ProtocolKind,
    ProtocolParams,
    build_moment_system,
    evolve,
    steady_state,
)
from .numerics import NumericalError
from .phase_diagram import ALL_PROTOCOLS, GridSpec, export_phase_csv, sweep
from .trajectory import TrajectoryConfig, oscillator_cooling_model, run_ensemble


class ConfigError(ValueError):
    """Bad configuration file or inconsistent option values."""


def _fmt(x) -> str:
    return f"{float(x):.12g}"


def _float_list(value) -> Tuple[float, ...]:
    if isinstance(value, (list, tuple)):
        return tuple(float(v) for v in value)
    return tuple(float(v) for v in str(value).split(",") if v.strip())


def _str_list(value) -> Tuple[str, ...]:
    if isinstance(value, (list, tuple)):
        return tuple(str(v) for v in value)
    return tuple(v.strip() for v in str(value).split(",") if v.strip())


@dataclass(frozen=True)
class _Opt:
    """One option: flag name (also the config-file key) plus parsing info."""

    name: str
    type: Callable
    default: object = None
    required: bool = False
    choices: Optional[tuple] = None
    help: str = ""

    @property
    def dest(self) -> str:
        return self.name.replace("-", "_")


_PROTOCOL_NAMES = tuple(k.value for k in ALL_PROTOCOLS)

_PROTOCOL_OPTS = (
    _Opt("protocol", str, required=True, choices=_PROTOCOL_NAMES),
    _Opt("lambda", float, 1.0, help="measurement strength"),
    _Opt("omega", float, 1.0, help="oscillator frequency"),
    _Opt("gamma", float, required=True, help="first filter bandwidth"),
    _Opt("Omega", float, help="second bandwidth / band-pass center"),
)

_SUBCOMMANDS = {
    "filter-response": (
        _Opt("filter", str, required=True, choices=("lowpass", "bandpass", "kernel")),
        _Opt("gammas", _float_list, help="cascade bandwidths, e.g. 1.0,2.0"),
        _Opt("gamma", float, help="band-pass bandwidth"),
        _Opt("Omega", float, help="band-pass center frequency"),
        _Opt("kernel-coeffs", _float_list, help="kernel ODE coefficients a0,...,a_{n-1}"),
        _Opt("kernel-init", _float_list, help="kernel initial derivatives f(0),...,f^(n-1)(0)"),
        _Opt("t-max", float, 10.0),
        _Opt("points", int, 200),
        _Opt("output", str, "-"),
    ),
    "steady-state": _PROTOCOL_OPTS + (
        _Opt("output", str, "-"),
    ),
    "evolve": _PROTOCOL_OPTS + (
        _Opt("e0", float, 1.0, help="initial energy in units of hbar*omega"),
        _Opt("dt", float, 1e-3),
        _Opt("steps", int, 1000),
        _Opt("stride", int, 1),
        _Opt("output", str, "-"),
    ),
    "trajectory": _PROTOCOL_OPTS + (
        _Opt("dt", float, 1e-3),
        _Opt("steps", int, 1000),
        _Opt("ntraj", int, 100),
        _Opt("seed", int, 0),
        _Opt("fock", int, 15, help="oscillator basis cutoff"),
        _Opt("stride", int, 10, help="record every this many steps"),
        _Opt("output", str, "-"),
    ),
    "phase-diagram": (
        _Opt("gamma-min", float, 0.1),
        _Opt("gamma-max", float, 100.0),
        _Opt("gamma-points", int, 200),
        _Opt("Omega-min", float, 0.1),
        _Opt("Omega-max", float, 1000.0),
        _Opt("Omega-points", int, 200),
        _Opt("lambda", float, 1.0),
        _Opt("omega", float, 1.0),
        _Opt("protocols", _str_list, _PROTOCOL_NAMES),
        _Opt("output", str, required=True),
    ),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="filtercool",
        description="Cooling a monitored oscillator with filtered feedback.")
    subs = parser.add_subparsers(dest="command")
    for name, opts in _SUBCOMMANDS.items():
        sp = subs.add_parser(name)
        sp.add_argument("--config", default=None,
                        help="JSON file with flag-name keys; flags override it")
        for opt in opts:
            kwargs = {"dest": opt.dest, "default": None, "help": opt.help}
            if opt.choices:
                kwargs["choices"] = opt.choices
            if opt.type in (_float_list, _str_list):
                kwargs["type"] = str
            else:
                kwargs["type"] = opt.type
            sp.add_argument(f"--{opt.name}", **kwargs)
    return parser


def load_config(path, known_keys=None) -> dict:
    """Read a flat JSON config; keys are flag names.

    Raises ConfigError naming the offending line on parse errors, and the
    offending key when ``known_keys`` is given and a key is not in it.
    """
    with open(path) as fh:
        text = fh.read()
    if not text.strip():
        return {}
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: parse error at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a flat JSON object")
    for key, value in data.items():
        if isinstance(value, dict):
            raise ConfigError(f"{path}: key '{key}' must be a flat value")
        if known_keys is not None and key not in known_keys:
            raise ConfigError(f"{path}: unknown key '{key}'")
    return data


def _merge_options(ns: argparse.Namespace) -> dict:
    """Combine flags, config file and defaults; flags win over the file."""
    opts = _SUBCOMMANDS[ns.command]
    file_values = {}
    if ns.config is not None:
        file_values = load_config(ns.config, known_keys={o.name for o in opts})
    merged = {}
    for opt in opts:
        value = getattr(ns, opt.dest)
        if value is None and opt.name in file_values:
            value = file_values[opt.name]
        if value is None:
            value = opt.default
        if value is not None:
            try:
                value = opt.type(value)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"option '{opt.name}': {exc}") from exc
        if value is None and opt.required:
            raise ConfigError(f"option '{opt.name}' is required")
        merged[opt.dest] = value
    return merged


def _protocol_params(cfg: dict) -> ProtocolParams:
    kind = ProtocolKind(cfg["protocol"])
    try:
        return ProtocolParams(cfg["lambda"], cfg["omega"], cfg["gamma"],
                              cfg["Omega"], kind)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


@contextlib.contextmanager
def _open_output(path):
    if path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _build_filter(cfg: dict) -> FilterModel:
    kind = cfg["filter"]
    try:
        if kind == "lowpass":
            if not cfg["gammas"]:
                raise ConfigError("lowpass filter needs --gammas")
            return lowpass_cascade(cfg["gammas"])
        if kind == "bandpass":
            if cfg["gamma"] is None or cfg["Omega"] is None:
                raise ConfigError("bandpass filter needs --gamma and --Omega")
            return bandpass(cfg["gamma"], cfg["Omega"])
        if not cfg["kernel_coeffs"] or not cfg["kernel_init"]:
            raise ConfigError("kernel filter needs --kernel-coeffs and --kernel-init")
        return kernel_filter(KernelSpec(cfg["kernel_coeffs"], cfg["kernel_init"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _cmd_filter_response(cfg: dict) -> None:
    model = _build_filter(cfg)
    if cfg["t_max"] <= 0 or cfg["points"] < 2:
        raise ConfigError("t-max must be positive and points at least 2")
    times = np.linspace(0.0, cfg["t_max"], cfg["points"])
    with _open_output(cfg["output"]) as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"h_{k + 1}" for k in range(model.n)])
        for t in times:
            h = impulse_response(model, t)
            writer.writerow([_fmt(t)] + [_fmt(v) for v in h])


def _cmd_steady_state(cfg: dict) -> None:
    params = _protocol_params(cfg)
    ss = steady_state(build_moment_system(params))
    with _open_output(cfg["output"]) as fh:
        writer = csv.writer(fh)
        writer.writerow(["protocol", "lambda", "omega", "gamma", "Omega",
                         "energy", "stable", "physical"])
        writer.writerow([
            params.kind.value, _fmt(params.lam), _fmt(params.omega),
            _fmt(params.gamma),
            _fmt(params.Omega) if params.Omega is not None else "nan",
            _fmt(ss.energy_over_hw),
            str(ss.stable).lower(), str(ss.physical).lower(),
        ])


def _cmd_evolve(cfg: dict) -> None:
    params = _protocol_params(cfg)
    system = build_moment_system(params)
    if cfg["steps"] < 1 or cfg["stride"] < 1 or cfg["steps"] % cfg["stride"]:
        raise ConfigError("stride must be positive and divide steps")
    x0 = np.zeros(system.dim)
    x0[system.energy_index] = cfg["e0"]
    try:
        path = evolve(system, x0, cfg["dt"], cfg["steps"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    with _open_output(cfg["output"]) as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + list(system.labels))
        for k in range(0, cfg["steps"] + 1, cfg["stride"]):
            writer.writerow([_fmt(k * cfg["dt"])] + [_fmt(v) for v in path[k]])


def _cmd_trajectory(cfg: dict) -> None:
    params = _protocol_params(cfg)
    if cfg["fock"] < 3:
        raise ConfigError("fock cutoff must be at least 3")
    model = oscillator_cooling_model(params, cfg["fock"])
    try:
        run_cfg = TrajectoryConfig(dt=cfg["dt"], n_steps=cfg["steps"],
                                   n_traj=cfg["ntraj"], base_seed=cfg["seed"],
                                   record_stride=cfg["stride"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    record = run_ensemble(model, run_cfg)
    tap = model.feedback.tap_index
    with _open_output(cfg["output"]) as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "mean_energy", "stderr_energy",
                         "mean_Dx", "var_Dx", "mean_Dp", "var_Dp"])
        for k, t in enumerate(record.times):
            writer.writerow([
                _fmt(t), _fmt(record.energy_mean[k]), _fmt(record.energy_stderr[k]),
                _fmt(record.signal_mean[0, tap, k]), _fmt(record.signal_var[0, tap, k]),
                _fmt(record.signal_mean[1, tap, k]), _fmt(record.signal_var[1, tap, k]),
            ])


def _cmd_phase_diagram(cfg: dict) -> None:
    try:
        protocols = tuple(ProtocolKind(name) for name in cfg["protocols"])
    except ValueError as exc:
        raise ConfigError(f"unknown protocol in --protocols: {exc}") from exc
    try:
        spec = GridSpec.log_spaced(
            (cfg["gamma_min"], cfg["gamma_max"]),
            (cfg["Omega_min"], cfg["Omega_max"]),
            cfg["gamma_points"], cfg["Omega_points"],
            cfg["lambda"], cfg["omega"], protocols)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    export_phase_csv(sweep(spec), cfg["output"])


_DISPATCH = {
    "filter-response": _cmd_filter_response,
    "steady-state": _cmd_steady_state,
    "evolve": _cmd_evolve,
    "trajectory": _cmd_trajectory,
    "phase-diagram": _cmd_phase_diagram,
}


def main(argv=None) -> int:
    """Entry point; returns the process exit code instead of raising."""
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage to stderr
        return int(exc.code) if exc.code else 0
    if ns.command is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        cfg = _merge_options(ns)
        _DISPATCH[ns.command](cfg)
    except (ConfigError, OSError) as exc:
        print(f"filtercool: error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"filtercool: numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


def run() -> None:
    """Console-script wrapper."""
    raise SystemExit(main())


if __name__ == "__main__":
    run()
