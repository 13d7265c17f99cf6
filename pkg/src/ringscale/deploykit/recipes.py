"""Container conversion and batch-job launch recipes.

Everything here renders text; nothing is executed. Rendering is a pure
function of its inputs, so identical recipes give byte-identical scripts.
"""

from __future__ import annotations

import shlex
from dataclasses import dataclass, replace

from .. import kvconfig
from ..errors import EmptyField, ValidationError
from ..topo import NodeSpec, PlacementPlan, validate_placement
from .templates import JobTemplate, load_template

FABRICS = ("default", "tcp_fallback")
MIXED_MPI_NODE_THRESHOLD = 512


@dataclass(frozen=True)
class ContainerRecipe:
    base_image: str
    install_steps: tuple
    export_steps: tuple = ()
    image_name: str = "tf-horovod"
    tar_dir: str = "/var/tmp"
    container_parent: str = "/path/on/cluster/containers"

    def __post_init__(self):
        object.__setattr__(self, "install_steps", tuple(self.install_steps))
        object.__setattr__(self, "export_steps", tuple(self.export_steps))
        for name in ("base_image", "image_name", "tar_dir"):
            if not getattr(self, name).strip():
                raise EmptyField(f"{name} must not be empty")
        if not self.install_steps:
            raise EmptyField("install_steps must not be empty")
        if any(not s.strip() for s in self.install_steps + self.export_steps):
            raise EmptyField("recipe steps must not be blank")


def default_container_recipe(template: JobTemplate | None = None, **overrides) -> ContainerRecipe:
    """Intel-optimised TensorFlow image with MPI and Horovod added, Charliecloud export."""
    template = template or load_template()
    values = dict(
        base_image="intel/intel-optimized-tensorflow:latest",
        install_steps=(
            "apt-get update",
            "apt-get install -y --no-install-recommends mpich libmpich-dev",
            "pip install --no-cache-dir horovod",
        ),
        image_name="tf-horovod",
    )
    values.update(overrides)
    recipe = ContainerRecipe(**values)
    if not recipe.export_steps:
        fmt = dict(image_name=recipe.image_name, tar_dir=recipe.tar_dir)
        recipe = replace(recipe, export_steps=(template.container["to_tarball"].format(**fmt),))
    return recipe


def render_container_recipe(cfg: ContainerRecipe, template: JobTemplate | None = None) -> str:
    """Build-host script: pull, install, save, convert, then hand-off to the cluster.

    Needs root for the container builder; the cluster side only unpacks the
    tarball and runs unprivileged.
    """
    template = template or load_template()
    if not cfg.export_steps:
        raise EmptyField("export_steps must not be empty")
    builder = template.container["builder"]
    build = template.container["build_name"].format(image_name=cfg.image_name)
    q = shlex.quote
    tarball = f"{cfg.tar_dir}/{cfg.image_name}.tar.gz"
    unpack = template.container["unpack"].format(
        image_name=cfg.image_name, tar_dir=cfg.tar_dir, container_parent=cfg.container_parent)
    lines = [
        "#!/bin/sh",
        f"# {template.label} container conversion recipe (run as root on a build host)",
        "set -eu",
        "",
        "# 1. pull the base image",
        f"{builder} pull {q(cfg.base_image)}",
        f"{builder} run -d --name {q(build)} {q(cfg.base_image)} sleep infinity",
        "",
        "# 2. install distributed-training support",
    ]
    lines += [f"{builder} exec {q(build)} sh -c {q(step)}" for step in cfg.install_steps]
    lines += [
        "",
        "# 3. save the modified image",
        f"{builder} commit {q(build)} {q(cfg.image_name)}",
        f"{builder} rm -f {q(build)}",
        "",
        "# 4. convert to an unprivileged container image",
    ]
    lines += list(cfg.export_steps)
    lines += [
        "",
        "# 5. copy to the HPC system (no outbound network there; use the site's transfer route)",
        f"# copy {tarball} to the cluster, then unpack it there with:",
        f"#   {unpack}",
    ]
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class LaunchRecipe:
    image_name: str
    container_dir: str
    plan: PlacementPlan
    nodes: int = 1
    host_mpi_dir: str = ""
    bind_mounts: tuple = ()
    fabric: str = "default"
    env: tuple = ()
    command: str = "python3 train.py"
    job_name: str = "ringscale"
    time_limit: str = "01:00:00"
    # the container's MPI stack cannot drive the native fabric (e.g. no psm2)
    needs_tcp_fabric: bool = False

    def __post_init__(self):
        object.__setattr__(self, "bind_mounts", tuple(tuple(b) for b in self.bind_mounts))
        object.__setattr__(self, "env", tuple(tuple(e) for e in self.env))
        for name in ("image_name", "container_dir", "command", "job_name"):
            if not getattr(self, name).strip():
                raise EmptyField(f"{name} must not be empty")
        if self.nodes < 1:
            raise ValidationError("nodes must be >= 1")
        if self.fabric not in FABRICS:
            raise ValidationError(f"fabric must be one of {', '.join(FABRICS)}")
        if not self.container_dir.startswith("/"):
            raise ValidationError("container_dir must be an absolute path")
        for host, cont in self.bind_mounts:
            if not (host.startswith("/") and cont.startswith("/")):
                raise ValidationError(f"bind mount {host}:{cont} must use absolute paths")
            if ":" in host or ":" in cont:
                raise ValidationError(f"bind mount paths may not contain ':' ({host}:{cont})")
        if self.host_mpi_dir:
            if not self.host_mpi_dir.startswith("/"):
                raise ValidationError("host_mpi_dir must be an absolute path")
            if (self.host_mpi_dir, self.host_mpi_dir) not in self.bind_mounts:
                raise ValidationError("host_mpi_dir needs a bind mount to the identical in-container path")
        keys = [k for k, _ in self.env]
        if len(set(keys)) != len(keys):
            raise ValidationError("duplicate environment variable")
        for k in keys:
            if not k.replace("_", "a").isalnum() or k[0].isdigit():
                raise ValidationError(f"invalid environment variable name {k!r}")
        if dict(self.env).get("OMP_NUM_THREADS") != str(self.plan.threads_per_rank):
            raise ValidationError("env must set OMP_NUM_THREADS to the plan's threads per rank")


def make_launch_recipe(plan: PlacementPlan, nodes=1, image_name="tf-horovod",
                       container_dir="/path/on/cluster/containers/tf-horovod", host_mpi_dir="",
                       bind_mounts=(), env=(), **kwargs) -> LaunchRecipe:
    """Build a LaunchRecipe, adding the OMP_NUM_THREADS export and, when the
    host MPI is used, the mirrored bind mount of its library directory."""
    binds = [tuple(b) for b in bind_mounts]
    if host_mpi_dir and (host_mpi_dir, host_mpi_dir) not in binds:
        binds.insert(0, (host_mpi_dir, host_mpi_dir))
    env = [(k, str(v)) for k, v in env if k != "OMP_NUM_THREADS"]
    env.insert(0, ("OMP_NUM_THREADS", str(plan.threads_per_rank)))
    return LaunchRecipe(image_name=image_name, container_dir=container_dir, plan=plan, nodes=nodes,
                        host_mpi_dir=host_mpi_dir, bind_mounts=tuple(binds), env=tuple(env), **kwargs)


def render_job_script(recipe: LaunchRecipe, node: NodeSpec, template: JobTemplate | None = None) -> str:
    """Batch script for *recipe*; placement errors from validate_placement pass through."""
    template = template or load_template()
    validate_placement(node, recipe.plan)
    plan = recipe.plan
    fields = dict(job_name=recipe.job_name, nodes=recipe.nodes, tasks_per_node=plan.ranks_per_node,
                  cpus_per_task=plan.threads_per_rank, time_limit=recipe.time_limit)
    pre = template.directive_prefix
    lines = [template.shebang, f"# {template.label} launch script, generated by ringscale"]
    lines += [f"{pre} {fmt.format(**fields)}" for fmt in template.directives.values()]
    ht = template.hyperthreading_directive if plan.hyperthreading else template.no_hyperthreading_directive
    lines += [f"{pre} {ht}", "", "set -eu", ""]
    lines += [f"export {k}={shlex.quote(v)}" for k, v in recipe.env]
    if recipe.fabric == "tcp_fallback":
        lines.append("# fabric override: route MPI traffic over TCP")
        lines += [f"export {k}={shlex.quote(v)}" for k, v in template.fabric_env]
    lines.append("")
    argv = list(template.launcher) + list(template.container_run)
    argv += [template.bind_flag.format(host=h, container=c) for h, c in recipe.bind_mounts]
    argv += [recipe.container_dir, template.command_separator]
    launch = " ".join(shlex.quote(a) for a in argv) + " " + recipe.command
    lines.append(launch)
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ParsedJobScript:
    nodes: int
    tasks_per_node: int
    cpus_per_task: int
    env: tuple
    bind_mounts: tuple
    fabric: str = "default"
    hyperthreading: bool | None = None
    container_dir: str = ""
    command: str = ""

    def key(self):
        return (self.nodes, self.tasks_per_node, self.cpus_per_task, self.env, self.bind_mounts)


def parse_job_script(text: str, template: JobTemplate | None = None) -> ParsedJobScript:
    """Recover the placement, environment and bind list from a rendered script."""
    template = template or load_template()
    pre = template.directive_prefix + " "
    directives = {}
    env = []
    launch = None
    hyperthreading = None
    for line in text.split("\n"):
        if line.startswith(pre):
            flag = line[len(pre):].strip()
            if flag == template.hyperthreading_directive:
                hyperthreading = True
            elif flag == template.no_hyperthreading_directive:
                hyperthreading = False
            elif "=" in flag:
                key, value = flag.split("=", 1)
                directives[key] = value
        elif line.startswith("export "):
            (assignment,) = shlex.split(line[len("export "):])
            key, value = assignment.split("=", 1)
            env.append((key, value))
        elif line.startswith(template.launcher[0] + " "):
            launch = line
    if launch is None:
        raise ValidationError("no launch line found")

    def directive(name):
        flag = template.directives[name].split("=", 1)[0]
        if flag not in directives:
            raise ValidationError(f"missing directive {flag}")
        return int(directives[flag])

    fabric = "default"
    fabric_pairs = list(template.fabric_env)
    if fabric_pairs and all(p in env for p in fabric_pairs):
        fabric = "tcp_fallback"
        env = [p for p in env if p not in fabric_pairs]

    sep = f" {template.command_separator} "
    head, _, command = launch.partition(sep)
    argv = shlex.split(head)
    binds = []
    rest = []
    for arg in argv[len(template.launcher) + len(template.container_run):]:
        if arg.startswith(template.bind_prefix):
            host, cont = arg[len(template.bind_prefix):].split(":", 1)
            binds.append((host, cont))
        else:
            rest.append(arg)
    return ParsedJobScript(
        nodes=directive("nodes"), tasks_per_node=directive("tasks_per_node"),
        cpus_per_task=directive("cpus_per_task"), env=tuple(env), bind_mounts=tuple(binds),
        fabric=fabric, hyperthreading=hyperthreading, container_dir=rest[-1] if rest else "",
        command=command)


@dataclass(frozen=True)
class Finding:
    kind: str
    message: str


def validate_recipe(recipe: LaunchRecipe, node: NodeSpec,
                    mixed_mpi_threshold=MIXED_MPI_NODE_THRESHOLD) -> list[Finding]:
    """Deployment risks for *recipe*; an empty list means nothing to report."""
    findings = []
    try:
        validate_placement(node, recipe.plan)
    except ValidationError as exc:
        findings.append(Finding("PlacementError", str(exc)))
    if not recipe.host_mpi_dir and recipe.nodes > mixed_mpi_threshold:
        findings.append(Finding(
            "MixedMpiWarning",
            f"container MPI on {recipe.nodes} nodes: runs above {mixed_mpi_threshold} nodes with the "
            "container's MPI against the host stack crashed with MPI errors; bind the host MPI "
            "library directory (host_mpi_dir) instead"))
    if recipe.fabric == "default" and recipe.needs_tcp_fabric:
        findings.append(Finding(
            "FabricWarning",
            "the container's MPI cannot use the native fabric; set fabric=tcp_fallback "
            "(slower, but avoids MPI start-up crashes)"))
    return findings


# -- key=value recipe files ---------------------------------------------------

LAUNCH_KEYS = {"image_name", "container_dir", "host_mpi_dir", "bind", "fabric", "nodes", "ranks_per_node",
               "threads_per_rank", "hyperthreading", "numa_clustering", "command", "job_name", "time_limit",
               "needs_tcp_fabric"}
CONTAINER_KEYS = {"base_image", "image_name", "install", "export", "tar_dir", "container_parent"}


def _check_keys(pairs):
    for key, _ in pairs:
        if key not in LAUNCH_KEYS | CONTAINER_KEYS and not key.startswith("env."):
            raise ValidationError(f"unknown recipe key {key!r}")


def launch_recipe_from_pairs(pairs) -> LaunchRecipe:
    _check_keys(pairs)
    single = {}
    binds, env = [], []
    for key, value in pairs:
        if key == "bind":
            host, sep, cont = value.partition(":")
            binds.append((host, cont if sep else host))
        elif key.startswith("env."):
            env.append((key[4:], value))
        elif key in LAUNCH_KEYS:
            if key in single:
                raise ValidationError(f"duplicate key {key!r}")
            single[key] = value
    for key in ("ranks_per_node", "threads_per_rank"):
        if key not in single:
            raise ValidationError(f"missing key {key!r}")
    plan = PlacementPlan(
        kvconfig.as_int("ranks_per_node", single.pop("ranks_per_node")),
        kvconfig.as_int("threads_per_rank", single.pop("threads_per_rank")),
        kvconfig.as_bool("hyperthreading", single.pop("hyperthreading", "false")),
        kvconfig.as_int("numa_clustering", single["numa_clustering"]) if "numa_clustering" in single else None,
    )
    single.pop("numa_clustering", None)
    kwargs = {}
    if "nodes" in single:
        kwargs["nodes"] = kvconfig.as_int("nodes", single.pop("nodes"))
    if "needs_tcp_fabric" in single:
        kwargs["needs_tcp_fabric"] = kvconfig.as_bool("needs_tcp_fabric", single.pop("needs_tcp_fabric"))
    kwargs.update(single)
    return make_launch_recipe(plan, bind_mounts=binds, env=env, **kwargs)


def container_recipe_from_pairs(pairs, template: JobTemplate | None = None) -> ContainerRecipe:
    _check_keys(pairs)
    single, install, export = {}, [], []
    for key, value in pairs:
        if key == "install":
            install.append(value)
        elif key == "export":
            export.append(value)
        elif key in CONTAINER_KEYS:
            if key in single:
                raise ValidationError(f"duplicate key {key!r}")
            single[key] = value
    if install:
        single["install_steps"] = tuple(install)
    if export:
        single["export_steps"] = tuple(export)
    return default_container_recipe(template, **single)


def load_launch_recipe(path) -> LaunchRecipe:
    return launch_recipe_from_pairs(kvconfig.load_kv(path))


def load_container_recipe(path) -> ContainerRecipe:
    return container_recipe_from_pairs(kvconfig.load_kv(path))
