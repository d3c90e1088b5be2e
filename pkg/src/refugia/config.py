"""Run configuration: flat `key = value` text with dotted section prefixes.

The format is line-based: blank lines and `#` comments are ignored, every
other line must read `section.key = value`. Unknown and duplicate keys are
rejected. All problems are collected and reported together with their line
numbers. `render_config` produces canonical text that parses back to an
equal configuration.
"""

from __future__ import annotations

from dataclasses import dataclass

from .dynamics import TransientConfig
from .errors import ParseError, ValidationError
from .geometry import GridSpec, RefugeShape
from .operators import ModelParams
from .steady import NewtonConfig

KINDS = ("simulate", "steady", "continue", "bifurcate", "verify")
RANGE_KINDS = ("continue", "bifurcate", "verify")

REFUGE_KINDS = ("rectangle", "disc", "empty")


@dataclass(frozen=True)
class ContinuationSettings:
    ds: float = 0.02
    n_steps: int = 24
    s0: float = 0.05
    amplitude_cap: float | None = None


@dataclass(frozen=True)
class RunConfig:
    kind: str
    seed: int
    grid: GridSpec
    refuge: RefugeShape
    params: ModelParams  # mu holds the scalar value, or mu_min for range kinds
    mu: float | None
    mu_range: tuple[float, float, int] | None  # (mu_min, mu_max, mu_points)
    newton: NewtonConfig
    transient: TransientConfig
    continuation: ContinuationSettings
    out_dir: str | None


# key -> (converter, default); REQUIRED means the key must be present
_REQUIRED = object()

_SCHEMA: dict[str, tuple] = {
    "experiment.kind": (str, _REQUIRED),
    "experiment.seed": (int, 0),
    "geometry.nx": (int, 64),
    "geometry.ny": (int, 64),
    "geometry.lx": (float, 1.0),
    "geometry.ly": (float, 1.0),
    "geometry.refuge.kind": (str, "empty"),
    "geometry.refuge.center_x": (float, None),
    "geometry.refuge.center_y": (float, None),
    "geometry.refuge.half_width_x": (float, None),
    "geometry.refuge.half_width_y": (float, None),
    "geometry.refuge.radius": (float, None),
    "params.lambda": (float, _REQUIRED),
    "params.m": (float, _REQUIRED),
    "params.c": (float, _REQUIRED),
    "params.b": (float, _REQUIRED),
    "params.mu": (float, None),
    "params.mu_min": (float, None),
    "params.mu_max": (float, None),
    "params.mu_points": (int, None),
    "params.d_u": (float, 1.0),
    "params.d_v": (float, 1.0),
    "params.r": (float, 1.0),
    "solver.newton.tol_residual": (float, 1e-10),
    "solver.newton.max_iter": (int, 50),
    "solver.transient.dt": (float, 0.1),
    "solver.transient.t_end": (float, 400.0),
    "solver.transient.steady_tol": (float, 1e-7),
    "solver.transient.max_steps": (int, 100_000),
    "solver.continuation.ds": (float, 0.02),
    "solver.continuation.n_steps": (int, 24),
    "solver.continuation.s0": (float, 0.05),
    "solver.continuation.amplitude_cap": (float, None),
    "output.dir": (str, None),
}


def parse_config(text: str, kind_override: str | None = None) -> RunConfig:
    """Parse and fully validate configuration text.

    kind_override fills in experiment.kind when the text omits it (the CLI
    passes its subcommand); if both are present they must agree.
    """
    parse_issues: list[tuple[int, str]] = []
    raw: dict[str, tuple[int, str]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            parse_issues.append((lineno, f"expected 'key = value', got {body!r}"))
            continue
        key, _, value = body.partition("=")
        key, value = key.strip(), value.strip()
        if not key or not value:
            parse_issues.append((lineno, "empty key or value"))
            continue
        if key in raw:
            parse_issues.append((lineno, f"duplicate key {key!r} (first at line {raw[key][0]})"))
            continue
        raw[key] = (lineno, value)
    if parse_issues:
        raise ParseError(parse_issues)

    issues: list[tuple[int, str]] = []
    values: dict[str, object] = {}
    for key, (lineno, value) in raw.items():
        if key not in _SCHEMA:
            issues.append((lineno, f"unknown key {key!r}"))
            continue
        conv = _SCHEMA[key][0]
        try:
            values[key] = conv(value)
        except ValueError:
            issues.append((lineno, f"{key}: cannot read {value!r} as {conv.__name__}"))
    for key, (_, default) in _SCHEMA.items():
        if key in values:
            continue
        if default is _REQUIRED:
            if key == "experiment.kind" and kind_override is not None:
                values[key] = kind_override
            else:
                issues.append((0, f"missing required key {key!r}"))
        else:
            values[key] = default

    def line_of(key: str) -> int:
        return raw[key][0] if key in raw else 0

    def check(cond: bool, key: str, msg: str) -> bool:
        if not cond:
            issues.append((line_of(key), msg))
        return cond

    kind = values.get("experiment.kind")
    if kind is not None:
        check(kind in KINDS, "experiment.kind", f"experiment.kind must be one of {KINDS}")
        if kind_override is not None and kind != kind_override:
            issues.append(
                (line_of("experiment.kind"),
                 f"experiment.kind = {kind!r} conflicts with requested {kind_override!r}")
            )

    check(values.get("geometry.nx", 4) >= 4, "geometry.nx", "geometry.nx must be >= 4")
    check(values.get("geometry.ny", 4) >= 4, "geometry.ny", "geometry.ny must be >= 4")
    check(values.get("geometry.lx", 1.0) > 0, "geometry.lx", "geometry.lx must be > 0")
    check(values.get("geometry.ly", 1.0) > 0, "geometry.ly", "geometry.ly must be > 0")

    rkind = values.get("geometry.refuge.kind")
    check(rkind in REFUGE_KINDS, "geometry.refuge.kind",
          f"geometry.refuge.kind must be one of {REFUGE_KINDS}")
    rect_keys = ("geometry.refuge.center_x", "geometry.refuge.center_y",
                 "geometry.refuge.half_width_x", "geometry.refuge.half_width_y")
    disc_keys = ("geometry.refuge.center_x", "geometry.refuge.center_y",
                 "geometry.refuge.radius")
    if rkind == "rectangle":
        for key in rect_keys:
            check(values.get(key) is not None, key, f"{key} required for a rectangle refuge")
        check(values.get("geometry.refuge.radius") is None, "geometry.refuge.radius",
              "radius does not apply to a rectangle refuge")
    elif rkind == "disc":
        for key in disc_keys:
            check(values.get(key) is not None, key, f"{key} required for a disc refuge")
        for key in ("geometry.refuge.half_width_x", "geometry.refuge.half_width_y"):
            check(values.get(key) is None, key, f"{key} does not apply to a disc refuge")
    elif rkind == "empty":
        for key in set(rect_keys) | set(disc_keys):
            check(values.get(key) is None, key, f"{key} does not apply to an empty refuge")

    lam = values.get("params.lambda")
    if lam is not None:
        check(lam > 0, "params.lambda", "params.lambda must be > 0")
    if values.get("params.m") is not None:
        check(values["params.m"] >= 0, "params.m",
              f"params.m must be >= 0, got {values['params.m']}")
    for key in ("params.c", "params.b"):
        if values.get(key) is not None:
            check(values[key] > 0, key, f"{key} must be > 0")
    for key in ("params.d_u", "params.d_v", "params.r"):
        check(values.get(key, 1.0) > 0, key, f"{key} must be > 0")

    mu = values.get("params.mu")
    mu_min = values.get("params.mu_min")
    mu_max = values.get("params.mu_max")
    mu_points = values.get("params.mu_points")
    has_range = any(x is not None for x in (mu_min, mu_max, mu_points))
    if kind in RANGE_KINDS:
        if mu is not None:
            issues.append((line_of("params.mu"),
                           f"kind={kind} needs a mu range; scalar params.mu rejected"))
        for key, val in (("params.mu_min", mu_min), ("params.mu_max", mu_max),
                         ("params.mu_points", mu_points)):
            check(val is not None, key, f"{key} required for kind={kind}")
        if mu_min is not None:
            check(mu_min > 0, "params.mu_min", "params.mu_min must be > 0")
        if mu_min is not None and mu_max is not None:
            check(mu_max > mu_min, "params.mu_max", "params.mu_max must exceed params.mu_min")
        if mu_points is not None:
            check(mu_points >= 2, "params.mu_points", "params.mu_points must be >= 2")
    elif kind in KINDS:
        check(mu is not None, "params.mu", f"params.mu required for kind={kind}")
        if mu is not None:
            check(mu > 0, "params.mu", "params.mu must be > 0")
        if has_range:
            for key in ("params.mu_min", "params.mu_max", "params.mu_points"):
                if values.get(key) is not None:
                    issues.append((line_of(key), f"{key} does not apply to kind={kind}"))

    check(values.get("solver.newton.tol_residual", 1.0) > 0,
          "solver.newton.tol_residual", "newton tolerance must be > 0")
    check(values.get("solver.newton.max_iter", 1) >= 1,
          "solver.newton.max_iter", "newton max_iter must be >= 1")
    check(values.get("solver.transient.dt", 1.0) > 0,
          "solver.transient.dt", "transient dt must be > 0")
    check(values.get("solver.transient.steady_tol", 1.0) > 0,
          "solver.transient.steady_tol", "transient steady_tol must be > 0")
    check(values.get("solver.transient.max_steps", 1) >= 1,
          "solver.transient.max_steps", "transient max_steps must be >= 1")
    check(values.get("solver.continuation.ds", 1.0) > 0,
          "solver.continuation.ds", "continuation ds must be > 0")
    check(values.get("solver.continuation.n_steps", 1) >= 1,
          "solver.continuation.n_steps", "continuation n_steps must be >= 1")
    s0 = values.get("solver.continuation.s0", 0.05)
    if lam is not None and lam > 0:
        check(0 < s0 <= 0.1 * lam, "solver.continuation.s0",
              f"continuation s0 must lie in (0, 0.1*lambda] = (0, {0.1*lam:g}]")
    cap = values.get("solver.continuation.amplitude_cap")
    if cap is not None:
        check(cap > 0, "solver.continuation.amplitude_cap", "amplitude_cap must be > 0")

    if issues:
        raise ValidationError(sorted(issues))

    if rkind == "rectangle":
        refuge = RefugeShape.rectangle(
            (values["geometry.refuge.center_x"], values["geometry.refuge.center_y"]),
            (values["geometry.refuge.half_width_x"], values["geometry.refuge.half_width_y"]),
        )
    elif rkind == "disc":
        refuge = RefugeShape.disc(
            (values["geometry.refuge.center_x"], values["geometry.refuge.center_y"]),
            values["geometry.refuge.radius"],
        )
    else:
        refuge = RefugeShape.empty()

    grid = GridSpec(values["geometry.nx"], values["geometry.ny"],
                    values["geometry.lx"], values["geometry.ly"])
    params = ModelParams(
        lam=values["params.lambda"],
        m=values["params.m"],
        c=values["params.c"],
        b=values["params.b"],
        mu=mu if mu is not None else values["params.mu_min"],
        d_u=values["params.d_u"],
        d_v=values["params.d_v"],
        r=values["params.r"],
    )
    return RunConfig(
        kind=values["experiment.kind"],
        seed=values["experiment.seed"],
        grid=grid,
        refuge=refuge,
        params=params,
        mu=mu,
        mu_range=(mu_min, mu_max, mu_points) if kind in RANGE_KINDS else None,
        newton=NewtonConfig(
            tol_residual=values["solver.newton.tol_residual"],
            max_iter=values["solver.newton.max_iter"],
        ),
        transient=TransientConfig(
            dt=values["solver.transient.dt"],
            t_end=values["solver.transient.t_end"],
            steady_tol=values["solver.transient.steady_tol"],
            max_steps=values["solver.transient.max_steps"],
        ),
        continuation=ContinuationSettings(
            ds=values["solver.continuation.ds"],
            n_steps=values["solver.continuation.n_steps"],
            s0=values["solver.continuation.s0"],
            amplitude_cap=cap,
        ),
        out_dir=values["output.dir"],
    )


def _fmt_value(x) -> str:
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def render_config(cfg: RunConfig) -> str:
    """Canonical text form; parse_config(render_config(cfg)) equals cfg."""
    pairs: list[tuple[str, object]] = [
        ("experiment.kind", cfg.kind),
        ("experiment.seed", cfg.seed),
        ("geometry.nx", cfg.grid.nx),
        ("geometry.ny", cfg.grid.ny),
        ("geometry.lx", cfg.grid.lx),
        ("geometry.ly", cfg.grid.ly),
        ("geometry.refuge.kind", cfg.refuge.kind),
    ]
    if cfg.refuge.kind == "rectangle":
        pairs += [
            ("geometry.refuge.center_x", cfg.refuge.center[0]),
            ("geometry.refuge.center_y", cfg.refuge.center[1]),
            ("geometry.refuge.half_width_x", cfg.refuge.half_width[0]),
            ("geometry.refuge.half_width_y", cfg.refuge.half_width[1]),
        ]
    elif cfg.refuge.kind == "disc":
        pairs += [
            ("geometry.refuge.center_x", cfg.refuge.center[0]),
            ("geometry.refuge.center_y", cfg.refuge.center[1]),
            ("geometry.refuge.radius", cfg.refuge.radius),
        ]
    pairs += [
        ("params.lambda", cfg.params.lam),
        ("params.m", cfg.params.m),
        ("params.c", cfg.params.c),
        ("params.b", cfg.params.b),
    ]
    if cfg.mu is not None:
        pairs.append(("params.mu", cfg.mu))
    if cfg.mu_range is not None:
        pairs += [
            ("params.mu_min", cfg.mu_range[0]),
            ("params.mu_max", cfg.mu_range[1]),
            ("params.mu_points", cfg.mu_range[2]),
        ]
    pairs += [
        ("params.d_u", cfg.params.d_u),
        ("params.d_v", cfg.params.d_v),
        ("params.r", cfg.params.r),
        ("solver.newton.tol_residual", cfg.newton.tol_residual),
        ("solver.newton.max_iter", cfg.newton.max_iter),
        ("solver.transient.dt", cfg.transient.dt),
        ("solver.transient.t_end", cfg.transient.t_end),
        ("solver.transient.steady_tol", cfg.transient.steady_tol),
        ("solver.transient.max_steps", cfg.transient.max_steps),
        ("solver.continuation.ds", cfg.continuation.ds),
        ("solver.continuation.n_steps", cfg.continuation.n_steps),
        ("solver.continuation.s0", cfg.continuation.s0),
    ]
    if cfg.continuation.amplitude_cap is not None:
        pairs.append(("solver.continuation.amplitude_cap", cfg.continuation.amplitude_cap))
    if cfg.out_dir is not None:
        pairs.append(("output.dir", cfg.out_dir))
    return "\n".join(f"{k} = {_fmt_value(v)}" for k, v in pairs) + "\n"
