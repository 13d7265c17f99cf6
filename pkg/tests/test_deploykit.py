from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ringscale.deploykit import (ContainerRecipe, default_container_recipe, load_container_recipe,
                                 load_launch_recipe, load_template, make_launch_recipe, parse_job_script,
                                 render_container_recipe, render_job_script, validate_recipe)
from ringscale.errors import EmptyField, Oversubscription, ValidationError
from ringscale.topo import SNG_NODE, PlacementPlan, enumerate_placements

GOLDEN = Path(__file__).parent / "golden"
HOST_MPI = "/opt/intel/impi/2019.4.243/intel64"

GOLDEN_CASES = {
    "job_1x48.sh": lambda: make_launch_recipe(PlacementPlan(1, 48), nodes=4),
    "job_2x48_ht.sh": lambda: make_launch_recipe(PlacementPlan(2, 48, hyperthreading=True), nodes=4),
    "job_4x12.sh": lambda: make_launch_recipe(PlacementPlan(4, 12), nodes=4),
    "job_4x12_host_mpi.sh": lambda: make_launch_recipe(PlacementPlan(4, 12), nodes=768, host_mpi_dir=HOST_MPI),
    "job_minimal.sh": lambda: make_launch_recipe(PlacementPlan(1, 1), nodes=1),
}


@pytest.mark.parametrize("name", sorted(GOLDEN_CASES))
def test_job_script_matches_golden(name):
    text = render_job_script(GOLDEN_CASES[name](), SNG_NODE)
    assert text.encode("utf-8") == (GOLDEN / name).read_bytes()
    assert "\r" not in text


def test_container_recipe_matches_golden():
    assert render_container_recipe(default_container_recipe()).encode() == (GOLDEN / "container_default.sh").read_bytes()


def test_four_rank_script_contents():
    text = render_job_script(GOLDEN_CASES["job_4x12.sh"](), SNG_NODE)
    for line in ("#SBATCH --nodes=4", "#SBATCH --ntasks-per-node=4", "#SBATCH --cpus-per-task=12",
                 "export OMP_NUM_THREADS=12"):
        assert line in text.splitlines()


def test_host_mpi_inserts_exactly_one_mirrored_bind():
    recipe = make_launch_recipe(PlacementPlan(4, 12), nodes=4, host_mpi_dir=HOST_MPI,
                                bind_mounts=[(HOST_MPI, HOST_MPI), ("/scratch/data", "/data")])
    launch = render_job_script(recipe, SNG_NODE).splitlines()[-1]
    assert launch.count(f"--bind={HOST_MPI}:{HOST_MPI}") == 1
    assert launch.count("--bind=") == 2
    parsed = parse_job_script(render_job_script(recipe, SNG_NODE))
    assert parsed.bind_mounts == ((HOST_MPI, HOST_MPI), ("/scratch/data", "/data"))


def test_host_mpi_without_mirror_is_rejected():
    from ringscale.deploykit import LaunchRecipe
    with pytest.raises(ValidationError):
        LaunchRecipe("img", "/c", PlacementPlan(1, 1), host_mpi_dir=HOST_MPI, bind_mounts=((HOST_MPI, "/mpi"),),
                     env=(("OMP_NUM_THREADS", "1"),))
    with pytest.raises(ValidationError):
        make_launch_recipe(PlacementPlan(1, 1), bind_mounts=[("relative", "/x")])
    with pytest.raises(ValidationError):
        make_launch_recipe(PlacementPlan(1, 1), container_dir="containers/x")
    with pytest.raises(EmptyField):
        make_launch_recipe(PlacementPlan(1, 1), command=" ")


def test_mixed_mpi_warning_threshold():
    container_mpi = make_launch_recipe(PlacementPlan(4, 12), nodes=768)
    kinds = [f.kind for f in validate_recipe(container_mpi, SNG_NODE)]
    assert kinds == ["MixedMpiWarning"]
    assert "512" in validate_recipe(container_mpi, SNG_NODE)[0].message
    host_mpi = make_launch_recipe(PlacementPlan(4, 12), nodes=768, host_mpi_dir=HOST_MPI)
    assert validate_recipe(host_mpi, SNG_NODE) == []
    assert validate_recipe(make_launch_recipe(PlacementPlan(4, 12), nodes=512), SNG_NODE) == []
    assert [f.kind for f in validate_recipe(make_launch_recipe(PlacementPlan(4, 12), nodes=100), SNG_NODE,
                                            mixed_mpi_threshold=64)] == ["MixedMpiWarning"]


def test_fabric_and_placement_findings():
    assert validate_recipe(make_launch_recipe(PlacementPlan(1, 1)), SNG_NODE) == []
    needs = make_launch_recipe(PlacementPlan(1, 48), needs_tcp_fabric=True)
    assert [f.kind for f in validate_recipe(needs, SNG_NODE)] == ["FabricWarning"]
    fixed = make_launch_recipe(PlacementPlan(1, 48), needs_tcp_fabric=True, fabric="tcp_fallback")
    assert validate_recipe(fixed, SNG_NODE) == []
    text = render_job_script(fixed, SNG_NODE)
    assert "export I_MPI_FABRICS=shm:tcp" in text.splitlines()
    assert parse_job_script(text).fabric == "tcp_fallback"
    bad = make_launch_recipe(PlacementPlan(4, 13))
    assert [f.kind for f in validate_recipe(bad, SNG_NODE)] == ["PlacementError"]
    with pytest.raises(Oversubscription):
        render_job_script(bad, SNG_NODE)


def test_container_recipe_ordering():
    text = render_container_recipe(default_container_recipe())
    lines = text.splitlines()
    convert = next(i for i, line in enumerate(lines) if line.startswith("ch-builder2tar"))
    installs = [i for i, line in enumerate(lines) if line.startswith("docker exec")]
    unpack = next(i for i, line in enumerate(lines) if "ch-tar2dir" in line)
    assert installs and max(installs) < convert < unpack
    assert not any(line.startswith(("ch-run", "srun")) for line in lines[:convert])
    assert render_container_recipe(default_container_recipe()) == text


def test_container_recipe_validation():
    with pytest.raises(EmptyField):
        default_container_recipe(install_steps=())
    with pytest.raises(EmptyField):
        ContainerRecipe("", ("x",))
    with pytest.raises(ValidationError):
        default_container_recipe(install_steps=())


def test_recipe_files(tmp_path):
    launch = tmp_path / "launch.cfg"
    launch.write_text(
        "# four ranks, host MPI\n"
        "nodes = 8\nranks_per_node = 4\nthreads_per_rank = 12\n"
        f"host_mpi_dir = {HOST_MPI}\nbind = /scratch:/data\nenv.KMP_AFFINITY = granularity=fine,compact\n")
    recipe = load_launch_recipe(launch)
    assert recipe.nodes == 8 and recipe.plan.ranks_per_node == 4
    assert recipe.bind_mounts == ((HOST_MPI, HOST_MPI), ("/scratch", "/data"))
    assert recipe.env == (("OMP_NUM_THREADS", "12"), ("KMP_AFFINITY", "granularity=fine,compact"))
    parsed = parse_job_script(render_job_script(recipe, SNG_NODE))
    assert parsed.env == recipe.env
    cont = tmp_path / "container.cfg"
    cont.write_text("base_image = centos:7\ninstall = yum -y install openmpi\ninstall = pip install horovod\n")
    crec = load_container_recipe(cont)
    assert crec.base_image == "centos:7" and len(crec.install_steps) == 2
    bad = tmp_path / "bad.cfg"
    bad.write_text("ranks_per_node = 1\nthreads_per_rank = 1\ncolour = blue\n")
    with pytest.raises(ValidationError):
        load_launch_recipe(bad)


def test_template_is_data():
    t = load_template()
    assert t.launcher[0] == "srun" and t.directive_prefix == "#SBATCH"
    with pytest.raises(ValidationError):
        load_template("pbs_singularity")


env_values = st.text(st.characters(codec="utf-8", exclude_characters="\n\r\x00"), max_size=12)
env_keys = st.from_regex(r"[A-Z][A-Z0-9_]{0,8}", fullmatch=True).filter(lambda k: k != "OMP_NUM_THREADS")
paths = st.from_regex(r"/[a-z0-9_]{1,8}(/[a-z0-9_.]{1,8}){0,2}", fullmatch=True)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(enumerate_placements(SNG_NODE)), st.integers(1, 6480),
       st.dictionaries(env_keys, env_values, max_size=4), st.lists(st.tuples(paths, paths), max_size=3),
       st.booleans())
def test_render_parse_round_trip(plan, nodes, env, binds, host_mpi):
    recipe = make_launch_recipe(plan, nodes=nodes, env=list(env.items()), bind_mounts=binds,
                                host_mpi_dir="/opt/mpi/lib" if host_mpi else "")
    text = render_job_script(recipe, SNG_NODE)
    assert text == render_job_script(recipe, SNG_NODE)
    parsed = parse_job_script(text)
    assert parsed.key() == (nodes, plan.ranks_per_node, plan.threads_per_rank, recipe.env, recipe.bind_mounts)
    assert parsed.hyperthreading == plan.hyperthreading
    logical = SNG_NODE.cores_per_node * (SNG_NODE.threads_per_core if plan.hyperthreading else 1)
    assert parsed.tasks_per_node * parsed.cpus_per_task <= logical
