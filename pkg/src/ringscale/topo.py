"""Node/cluster hardware model, rank x thread placement plans, peak FLOPS.

A placement plan describes one node's configuration: how many MPI ranks it
hosts, how many OpenMP threads each rank runs, whether hyperthreading is
used and how many NUMA domains the node is clustered into.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from . import kvconfig
from .errors import NumaMismatch, Oversubscription, ValidationError

LANE_BITS = {"fp64": 64, "fp32": 32}
FREQ_MODES = ("nominal", "production")


@dataclass(frozen=True)
class NodeSpec:
    cores_per_node: int
    sockets: int
    numa_domains: int
    threads_per_core: int
    nominal_freq_ghz: float
    production_freq_ghz: float
    simd_width_bits: int
    fma_units_per_core: int
    memory_gb: float
    # NUMA domain counts per node the firmware can be configured into
    # (sub-NUMA clustering). Empty means only the native ``numa_domains``.
    numa_modes: tuple[int, ...] = ()

    def __post_init__(self):
        for name in ("cores_per_node", "sockets", "numa_domains", "threads_per_core",
                     "nominal_freq_ghz", "production_freq_ghz", "simd_width_bits",
                     "fma_units_per_core", "memory_gb"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be strictly positive")
        if self.threads_per_core not in (1, 2):
            raise ValidationError("threads_per_core must be 1 or 2")
        if self.cores_per_node % self.sockets:
            raise ValidationError("cores_per_node must be divisible by sockets")
        if self.cores_per_node % self.numa_domains:
            raise ValidationError("cores_per_node must be divisible by numa_domains")
        modes = tuple(sorted(set(self.numa_modes) | {self.numa_domains}))
        for mode in modes:
            if mode < 1 or self.cores_per_node % mode:
                raise ValidationError(f"NUMA mode {mode} does not divide {self.cores_per_node} cores")
        object.__setattr__(self, "numa_modes", modes)

    @property
    def logical_cores(self):
        return self.cores_per_node * self.threads_per_core


@dataclass(frozen=True)
class ClusterSpec:
    name: str
    total_nodes: int
    node: NodeSpec

    def __post_init__(self):
        if self.total_nodes < 1:
            raise ValidationError("total_nodes must be >= 1")

    @property
    def total_cores(self):
        return self.total_nodes * self.node.cores_per_node


@dataclass(frozen=True)
class PlacementPlan:
    ranks_per_node: int
    threads_per_rank: int
    hyperthreading: bool = False
    # NUMA domains per node; None = smallest supported mode fitting the ranks
    numa_clustering: int | None = None

    def key(self):
        return (self.ranks_per_node, self.threads_per_rank, self.hyperthreading)


@dataclass(frozen=True)
class ValidatedPlan:
    plan: PlacementPlan
    cores_used: int
    cores_available: int

    @property
    def physical(self):
        return not self.plan.hyperthreading


SNG_NODE = NodeSpec(
    cores_per_node=48,
    sockets=2,
    numa_domains=2,
    threads_per_core=2,
    nominal_freq_ghz=2.7,
    production_freq_ghz=2.3,
    simd_width_bits=512,
    fma_units_per_core=2,
    memory_gb=96,
    numa_modes=(2, 4),
)

# 8 thin islands x 792 nodes + 1 fat island x 144 nodes = 311,040 cores
SNG = ClusterSpec(name="SuperMUC-NG", total_nodes=6480, node=SNG_NODE)

PRESETS = {"sng": SNG}


def validate_placement(node: NodeSpec, plan: PlacementPlan) -> ValidatedPlan:
    """Check *plan* against *node*; return it with its core accounting.

    Raises Oversubscription when ranks x threads exceeds the logical cores
    available (physical cores only, unless hyperthreading is on) and
    NumaMismatch when the rank count does not map onto the NUMA layout.
    """
    if plan.ranks_per_node < 1 or plan.threads_per_rank < 1:
        raise ValidationError("ranks_per_node and threads_per_rank must be >= 1")
    if plan.hyperthreading and node.threads_per_core < 2:
        raise ValidationError("hyperthreading requested on a node without SMT")
    clustering = plan.numa_clustering
    if clustering is None:
        # smallest supported clustering that gives every rank whole domains
        fits = [m for m in node.numa_modes if plan.ranks_per_node == 1 or m % plan.ranks_per_node == 0]
        clustering = fits[0] if fits else node.numa_domains
    if clustering not in node.numa_modes:
        raise NumaMismatch(
            f"node cannot be clustered into {clustering} NUMA domains "
            f"(supported: {', '.join(map(str, node.numa_modes))})")
    available = node.cores_per_node * (node.threads_per_core if plan.hyperthreading else 1)
    used = plan.ranks_per_node * plan.threads_per_rank
    if used > available:
        raise Oversubscription(
            f"{plan.ranks_per_node} ranks x {plan.threads_per_rank} threads = {used} "
            f"> {available} {'logical' if plan.hyperthreading else 'physical'} cores")
    ranks = plan.ranks_per_node
    if ranks != 1 and clustering % ranks:
        raise NumaMismatch(
            f"{ranks} ranks per node do not divide evenly into {clustering} NUMA domains")
    return ValidatedPlan(replace(plan, numa_clustering=clustering), used, available)


def enumerate_placements(node: NodeSpec) -> list[PlacementPlan]:
    """All plans that fill a node's cores exactly with one rank per node,
    per socket, or per NUMA domain, for every supported clustering mode."""
    seen = {}
    for clustering in node.numa_modes:
        rank_options = {1, node.sockets, clustering}
        for ranks in sorted(r for r in rank_options if r <= 2 * clustering):
            for ht in (False, True) if node.threads_per_core == 2 else (False,):
                capacity = node.cores_per_node * (node.threads_per_core if ht else 1)
                if capacity % ranks:
                    continue
                plan = PlacementPlan(ranks, capacity // ranks, ht, clustering)
                try:
                    validate_placement(node, plan)
                except ValidationError:
                    continue
                seen.setdefault(plan.key(), plan)
    return sorted(seen.values(), key=lambda p: (p.ranks_per_node, p.hyperthreading, p.threads_per_rank))


def peak_flops(spec: NodeSpec | ClusterSpec, precision: str = "fp64", freq_mode: str = "nominal") -> float:
    """Theoretical peak in FLOP/s assuming one full-width FMA per unit per cycle."""
    if isinstance(spec, ClusterSpec):
        return spec.total_nodes * peak_flops(spec.node, precision, freq_mode)
    if precision not in LANE_BITS:
        raise ValidationError(f"unknown precision {precision!r}")
    if freq_mode not in FREQ_MODES:
        raise ValidationError(f"unknown frequency mode {freq_mode!r}")
    lane_bits = LANE_BITS[precision]
    if spec.simd_width_bits % lane_bits:
        raise ValidationError(f"{spec.simd_width_bits}-bit SIMD is not a multiple of {lane_bits}-bit lanes")
    freq_ghz = spec.nominal_freq_ghz if freq_mode == "nominal" else spec.production_freq_ghz
    lanes = spec.simd_width_bits // lane_bits
    return spec.cores_per_node * (freq_ghz * 1e9) * spec.fma_units_per_core * lanes * 2.0


_INT_FIELDS = ("cores_per_node", "sockets", "numa_domains", "threads_per_core",
               "simd_width_bits", "fma_units_per_core")
_FLOAT_FIELDS = ("nominal_freq_ghz", "production_freq_ghz", "memory_gb")


def cluster_from_pairs(pairs) -> ClusterSpec:
    values = {}
    for key, value in pairs:
        if key in values:
            raise ValidationError(f"duplicate key {key!r}")
        values[key] = value
    name = values.pop("name", "cluster")
    total_nodes = kvconfig.as_int("total_nodes", values.pop("total_nodes", "1"))
    node_kwargs = {}
    for key in _INT_FIELDS:
        if key not in values:
            raise ValidationError(f"missing key {key!r}")
        node_kwargs[key] = kvconfig.as_int(key, values.pop(key))
    for key in _FLOAT_FIELDS:
        if key not in values:
            raise ValidationError(f"missing key {key!r}")
        node_kwargs[key] = kvconfig.as_float(key, values.pop(key))
    modes = values.pop("numa_modes", "")
    node_kwargs["numa_modes"] = tuple(kvconfig.as_int("numa_modes", m) for m in modes.split(",") if m.strip())
    if values:
        raise ValidationError(f"unknown keys: {', '.join(sorted(values))}")
    return ClusterSpec(name=name, total_nodes=total_nodes, node=NodeSpec(**node_kwargs))


def load_cluster(name_or_path: str) -> ClusterSpec:
    """Resolve a built-in preset name (``sng``) or a key=value spec file."""
    if name_or_path.lower() in PRESETS:
        return PRESETS[name_or_path.lower()]
    return cluster_from_pairs(kvconfig.load_kv(name_or_path))


def cluster_to_text(cluster: ClusterSpec) -> str:
    node = cluster.node
    lines = [f"name={cluster.name}", f"total_nodes={cluster.total_nodes}"]
    lines += [f"{key}={getattr(node, key)}" for key in _INT_FIELDS + _FLOAT_FIELDS]
    lines.append("numa_modes=" + ",".join(map(str, node.numa_modes)))
    return "\n".join(lines) + "\n"
