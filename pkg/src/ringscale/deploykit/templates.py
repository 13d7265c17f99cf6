"""Launcher/scheduler template sets, stored as JSON data files."""

import json
from dataclasses import dataclass
from importlib import resources

from ..errors import ValidationError

DEFAULT_TEMPLATE = "slurm_charliecloud"


@dataclass(frozen=True)
class JobTemplate:
    name: str
    label: str
    shebang: str
    directive_prefix: str
    directives: dict
    hyperthreading_directive: str
    no_hyperthreading_directive: str
    launcher: tuple
    container_run: tuple
    bind_flag: str
    bind_prefix: str
    command_separator: str
    fabric_env: tuple
    container: dict


def available_templates():
    return sorted(p.name[:-5] for p in resources.files(__package__).joinpath("templates").iterdir()
                  if p.name.endswith(".json"))


def load_template(name=DEFAULT_TEMPLATE) -> JobTemplate:
    if name not in available_templates():
        raise ValidationError(f"unknown template {name!r} (available: {', '.join(available_templates())})")
    raw = json.loads(resources.files(__package__).joinpath("templates", f"{name}.json").read_text("utf-8"))
    raw["launcher"] = tuple(raw["launcher"])
    raw["container_run"] = tuple(raw["container_run"])
    raw["fabric_env"] = tuple(tuple(p) for p in raw["fabric_env"])
    return JobTemplate(**raw)
