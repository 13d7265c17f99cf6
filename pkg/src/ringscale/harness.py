"""Weak-scaling, data-parallel synchronous SGD across W workers.

Each worker owns a fixed shard (seeded ``seed + rank``), takes
``samples_per_worker_per_epoch / per_worker_batch`` steps per epoch, and after
every step averages its gradient with the other workers through the ring
allreduce. All workers apply the same update, so replicas stay bitwise
identical.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import collectives
from .errors import ReplicaDivergence, RuntimeFailure, ValidationError
from .mlcore import Conv3dSpec, conv3d_forward, init_params, loss_and_grad, synthetic_shower
from .report import PerfRecord, ScalingRecord
from .topo import NodeSpec, peak_flops

LR_RULES = ("linear", "sqrt", "none")


def effective_lr(base, workers, rule="linear"):
    if workers < 1:
        raise ValidationError("workers must be >= 1")
    if rule == "linear":
        return base * workers
    if rule == "sqrt":
        return base * math.sqrt(workers)
    if rule == "none":
        return base
    raise ValidationError(f"unknown learning-rate rule {rule!r}")


@dataclass(frozen=True)
class TrainConfig:
    workers: int = 1
    per_worker_batch: int = 2
    base_learning_rate: float = 0.01
    lr_scaling: str = "linear"
    epochs: int = 1
    samples_per_worker_per_epoch: int = 8
    sample_side: int = 8
    seed: int = 0
    conv_channels: int = 4
    kernel: int = 3

    def __post_init__(self):
        if self.workers < 1:
            raise ValidationError("workers must be >= 1")
        if self.per_worker_batch < 1 or self.epochs < 1:
            raise ValidationError("per_worker_batch and epochs must be >= 1")
        if self.base_learning_rate <= 0:
            raise ValidationError("base_learning_rate must be positive")
        if self.lr_scaling not in LR_RULES:
            raise ValidationError(f"lr_scaling must be one of {', '.join(LR_RULES)}")
        if self.samples_per_worker_per_epoch < self.per_worker_batch:
            raise ValidationError("samples_per_worker_per_epoch must be >= per_worker_batch")
        if self.sample_side < self.kernel:
            raise ValidationError("sample_side must be >= kernel")

    @property
    def global_batch(self):
        return self.per_worker_batch * self.workers

    @property
    def effective_lr(self):
        return effective_lr(self.base_learning_rate, self.workers, self.lr_scaling)

    @property
    def steps_per_epoch(self):
        return self.samples_per_worker_per_epoch // self.per_worker_batch


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    wall_time_s: float
    mean_loss: float
    total_flops: int

    @property
    def achieved_flops_per_s(self):
        return self.total_flops / self.wall_time_s


@dataclass
class TrainResult:
    config: TrainConfig
    epochs: list
    params: object
    step_losses: list


def worker_shard(config, rank):
    return synthetic_shower(config.seed + rank, config.samples_per_worker_per_epoch, config.sample_side)


def _train_worker(comm, config, check_replicas):
    inputs, targets = worker_shard(config, comm.rank)
    params = init_params(config.sample_side, config.seed, config.conv_channels, config.kernel)
    lr = config.effective_lr
    b = config.per_worker_batch
    stats, step_losses = [], []
    for epoch in range(config.epochs):
        collectives.barrier(comm)
        start = time.monotonic()
        loss_sum, flops = 0.0, 0
        for step in range(config.steps_per_epoch):
            sl = slice(step * b, (step + 1) * b)
            loss, grads, fc = loss_and_grad(params, inputs[sl], targets[sl])
            avg = collectives.allreduce(comm, grads.flatten(), "average")
            params = params.unflatten(params.flatten() - lr * avg)
            loss_sum += loss
            flops += fc.total_flops
            step_losses.append(loss)
            if check_replicas:
                replicas = collectives.allgather(comm, params.flatten())
                if any(r.tobytes() != replicas[0].tobytes() for r in replicas):
                    raise ReplicaDivergence(f"replicas differ after epoch {epoch} step {step}")
        # global mean loss over every worker's steps
        totals = collectives.allreduce(comm, np.array([loss_sum, config.steps_per_epoch]), "sum")
        wall = time.monotonic() - start
        stats.append(EpochStats(epoch, wall, float(totals[0] / totals[1]), flops))
    return stats, params.flatten(), step_losses


def train_distributed(config: TrainConfig, transport="in_process", processes=False,
                      check_replicas=False, step_timeout=None) -> TrainResult:
    """Run synchronous data-parallel SGD; stats and final params come from worker 0.

    Workers are threads on the in-process transport by default; with
    ``transport="tcp"`` they talk over loopback sockets, and ``processes=True``
    runs one OS process per rank.
    """
    results = collectives.run_world(config.workers, _train_worker, config, check_replicas,
                                    transport=transport, processes=processes, step_timeout=step_timeout)
    stats, flat, step_losses = results[0]
    template = init_params(config.sample_side, config.seed, config.conv_channels, config.kernel)
    return TrainResult(config, stats, template.unflatten(flat), step_losses)


def train_single(config: TrainConfig, inputs, targets, lr, steps, batch):
    """Plain single-process SGD over *inputs* in consecutive batches (reference loop)."""
    params = init_params(config.sample_side, config.seed, config.conv_channels, config.kernel)
    losses = []
    for step in range(steps):
        sl = slice(step * batch, (step + 1) * batch)
        loss, grads, _ = loss_and_grad(params, inputs[sl], targets[sl])
        params = params.unflatten(params.flatten() - lr * grads.flatten())
        losses.append(loss)
    return params, losses


class MeasurementAborted(RuntimeFailure):
    """A training run failed; ``records`` holds the completed worker counts."""

    def __init__(self, records, cause):
        self.records = records
        self.cause = cause
        super().__init__(f"scaling measurement aborted after {len(records)} record(s): {cause}")


def measure_scaling(template: TrainConfig, worker_counts, repeats=4, transport="in_process",
                    processes=False, on_run=None):
    """Mean epoch wall time for each worker count, per-worker work held fixed.

    *on_run*, if given, is called as ``on_run(workers, repeat, TrainResult)``.
    """
    worker_counts = list(worker_counts)
    if not worker_counts:
        raise ValidationError("worker_counts must not be empty")
    if any(b <= a for a, b in zip(worker_counts, worker_counts[1:])):
        raise ValidationError("worker_counts must be strictly ascending")
    if repeats < 1:
        raise ValidationError("repeats must be >= 1")
    records = []
    for workers in worker_counts:
        config = replace(template, workers=workers)
        times = []
        try:
            for rep in range(repeats):
                result = train_distributed(config, transport=transport, processes=processes)
                times.extend(e.wall_time_s for e in result.epochs)
                if on_run is not None:
                    on_run(workers, rep, result)
        except Exception as exc:
            raise MeasurementAborted(records, exc) from exc
        records.append(ScalingRecord(workers, float(np.mean(times))))
    return records


@dataclass(frozen=True)
class ConvPerf:
    """Timing of repeated conv3d_forward calls normalised by a node's peak.

    The achieved rate uses the 10th-percentile call time: on shared machines
    clock speed drifts between regimes for hundreds of milliseconds, and a
    low quantile tracks what the kernel sustains rather than how busy the
    neighbours were (cf. ``timeit``'s advice to take the minimum). A few
    hundred repeats keep the quantile clear of single lucky calls.
    ``elapsed_s`` is the total over all timed calls.
    """

    shape: tuple
    spec: Conv3dSpec
    repeats: int
    flops_per_call: int
    elapsed_s: float
    fast_call_s: float
    peak_flops_per_s: float

    @property
    def achieved_flops_per_s(self):
        return self.flops_per_call / self.fast_call_s

    @property
    def ratio(self):
        return self.achieved_flops_per_s / self.peak_flops_per_s

    @property
    def percent_of_peak(self):
        return 100.0 * self.ratio

    def against(self, node: NodeSpec, precision="fp64", freq_mode="nominal"):
        """Same measurement, normalised by another node's peak."""
        return replace(self, peak_flops_per_s=peak_flops(node, precision, freq_mode))

    def perf_record(self, units=1):
        """Report row: *units* nodes each achieving this rate."""
        return PerfRecord(units, units * self.achieved_flops_per_s / 1e15, self.ratio)

    def as_dict(self):
        d = asdict(self)
        d.update(achieved_flops_per_s=self.achieved_flops_per_s, ratio=self.ratio)
        return d


def measure_conv_percent_of_peak(node: NodeSpec, shape=(1, 1, 9, 9, 9), spec=None, repeats=200,
                                 precision="fp64", freq_mode="nominal", seed=0, warmup_s=0.5) -> ConvPerf:
    """Time *repeats* forward convolutions of a *shape* input and normalise by *node*'s peak.

    The default layer is the toy model's conv (1 -> 4 channels, 3^3 kernel).
    Untimed calls run for at least *warmup_s* seconds first so clocks and
    caches settle before the measurement.
    """
    if repeats < 1:
        raise ValidationError("repeats must be >= 1")
    spec = spec or Conv3dSpec(shape[1], 4, (3, 3, 3))
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(shape)
    w = rng.standard_normal(spec.weight_shape)
    bias = np.zeros(spec.out_channels)
    _, fc = conv3d_forward(x, spec, w, bias)  # also validates shapes
    settle = time.perf_counter() + warmup_s
    while time.perf_counter() < settle:
        conv3d_forward(x, spec, w, bias)
    calls = np.empty(repeats)
    for i in range(repeats):
        start = time.perf_counter()
        conv3d_forward(x, spec, w, bias)
        calls[i] = time.perf_counter() - start
    return ConvPerf(tuple(shape), spec, repeats, fc.total_flops, float(calls.sum()),
                    float(np.percentile(calls, 10)),
                    peak_flops(node, precision, freq_mode))
