"""JSON experiment configuration (schema version 1)."""

import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .errors import ConfigError
from .models import ParamBox, available_models, builtin_model
from .simulate import Mu0, _exact_ratio


class GridCell(BaseModel):
    model_config = ConfigDict(extra="forbid")

    delta_n: float = Field(gt=0)
    T: float = Field(gt=0)
    N: int = Field(ge=1)


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    schema_version: Literal[1] = 1
    model: str
    theta: list[float]
    N: int = Field(ge=1)
    T: float = Field(gt=0)
    delta_n: float = Field(gt=0)
    euler_step: float = Field(default=0.01, gt=0)
    starts: int = Field(default=8, ge=1)
    mu0: str = "dirac:1"
    seed: int = 0
    replications: int = Field(default=100, ge=1)
    workers: int = Field(default=1, ge=0)
    alpha: float = Field(default=0.05, gt=0, lt=1)
    box: Optional[list[tuple[float, float]]] = None
    grids: Optional[list[GridCell]] = None

    def param_box(self) -> ParamBox:
        if self.box is None:
            return builtin_model(self.model).default_box
        return ParamBox([lo for lo, _ in self.box], [hi for _, hi in self.box])


def _semantic_violations(cfg: ExperimentConfig) -> list:
    out = []
    if cfg.model not in available_models():
        return [f"model: unknown model {cfg.model!r} (available: {', '.join(available_models())})"]
    model = builtin_model(cfg.model)
    if len(cfg.theta) != model.p:
        out.append(f"theta: {cfg.model} needs {model.p} values, got {len(cfg.theta)}")
    try:
        Mu0.parse(cfg.mu0)
    except ValueError as exc:
        out.append(f"mu0: {exc}")

    cells = [(cfg.delta_n, cfg.T, "delta_n", "T")]
    cells += [(g.delta_n, g.T, f"grids[{k}].delta_n", f"grids[{k}].T") for k, g in enumerate(cfg.grids or [])]
    for dn, T, dn_name, T_name in cells:
        if cfg.euler_step > dn:
            out.append(f"{dn_name} and euler_step: euler_step={cfg.euler_step} exceeds {dn_name}={dn}")
            continue
        try:
            _exact_ratio(dn, cfg.euler_step, dn_name, "euler_step")
        except ValueError as exc:
            out.append(f"{dn_name} and euler_step: {exc}")
        try:
            _exact_ratio(T, dn, T_name, dn_name)
        except ValueError as exc:
            out.append(f"{T_name} and {dn_name}: {exc}")

    box = None
    if cfg.box is not None:
        if len(cfg.box) != model.p:
            out.append(f"box: {cfg.model} needs {model.p} intervals, got {len(cfg.box)}")
        else:
            bad = [k for k, (lo, hi) in enumerate(cfg.box) if not lo < hi]
            if bad:
                out.append(f"box: lower >= upper at components {bad}")
            else:
                box = cfg.param_box()
    else:
        box = model.default_box
    names = model.param_names or tuple(f"theta[{k}]" for k in range(model.p))
    for k in model.positive:
        if box is not None and box.lower[k] <= 0:
            out.append(f"box: {names[k]} lower bound {box.lower[k]} must be > 0 (diffusion must stay positive)")
        if len(cfg.theta) == model.p and cfg.theta[k] <= 0:
            out.append(f"theta: {names[k]}={cfg.theta[k]} must be > 0 (diffusion must stay positive)")
    if box is not None and len(cfg.theta) == model.p and not box.contains(cfg.theta):
        out.append(f"theta: {cfg.theta} lies outside the box")
    return out


def validate_config(raw: dict) -> ExperimentConfig:
    violations = []
    try:
        cfg = ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        errs = exc.errors()
        violations = [f"{'.'.join(str(p) for p in e['loc']) or '<root>'}: {e['msg']}" for e in errs]
        # drop the offending keys and keep checking, so every problem is reported at once
        bad = {e["loc"][0] for e in errs if e["loc"]}
        try:
            cfg = ExperimentConfig.model_validate({k: v for k, v in raw.items() if k not in bad})
        except ValidationError:
            raise ConfigError(violations) from None
    violations += _semantic_violations(cfg)
    if violations:
        raise ConfigError(violations)
    return cfg


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return validate_config(raw)
