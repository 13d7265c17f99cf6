import pytest

from ringscale.topo import SNG, SNG_NODE, NodeSpec


@pytest.fixture
def sng_node():
    return SNG_NODE


@pytest.fixture
def sng():
    return SNG


def small_node(cores=4, sockets=1, numa=1, tpc=1, **kw):
    return NodeSpec(cores_per_node=cores, sockets=sockets, numa_domains=numa, threads_per_core=tpc,
                    nominal_freq_ghz=kw.get("freq", 1.0), production_freq_ghz=kw.get("freq", 1.0),
                    simd_width_bits=kw.get("simd", 64), fma_units_per_core=kw.get("fma", 1),
                    memory_gb=kw.get("mem", 1.0))


def local_node():
    """A generous-but-honest description of the machine running the tests.

    Logical CPUs count as cores, two FMA pipes, widest advertised SIMD and the
    reported clock (at least 2 GHz), so the resulting peak is an upper bound.
    """
    import os
    import re

    text = ""
    try:
        with open("/proc/cpuinfo") as fh:
            text = fh.read()
    except OSError:
        pass
    mhz = [float(m) for m in re.findall(r"cpu MHz\s*:\s*([\d.]+)", text)]
    freq = max(mhz + [2000.0]) / 1000.0
    simd = 512 if "avx512f" in text else 256 if "avx" in text else 128
    cores = os.cpu_count() or 1
    return NodeSpec(cores_per_node=cores, sockets=1, numa_domains=1, threads_per_core=1,
                    nominal_freq_ghz=freq, production_freq_ghz=freq, simd_width_bits=simd,
                    fma_units_per_core=2, memory_gb=1.0)


# -- one PASS/FAIL/SKIP line per acceptance criterion ---------------------------

_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if item.path.name != "test_acceptance.py":
        return
    title = (item.function.__doc__ or item.name).strip().splitlines()[0]
    if report.when == "call" or (report.when == "setup" and not report.passed):
        status = "PASS" if report.passed else "SKIP" if report.skipped else "FAIL"
        detail = ""
        if report.skipped and isinstance(report.longrepr, tuple):
            detail = report.longrepr[2]
        elif report.failed:
            detail = report.longrepr.reprcrash.message.splitlines()[0] if hasattr(report.longrepr, "reprcrash") else ""
        _CRITERIA[item.nodeid] = (title, status, report.duration, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for title, status, duration, detail in _CRITERIA.values():
        line = f"{status:4}  {title}  ({duration:.2f} s)"
        if detail:
            line += f"  -- {detail}"
        terminalreporter.write_line(line)
