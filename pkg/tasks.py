from pathlib import Path
import re

from invoke import task
import semver
import toml


SCENARIOS = Path("scenarios")


@task
def clean(c):
    """Remove build artifacts and result files."""
    patterns = ["build/", "dist/", "*.egg-info", "__pycache__", "*.pyc", "results/"]
    for pattern in patterns:
        c.run(f"rm -rf {pattern}")


@task
def run_tests(c, slow=False):
    """Run test suite; --slow runs the desk-scale acceptance experiments too."""
    c.run("pytest -m 'slow or not slow'" if slow else "pytest")


@task
def lint(c):
    """Run code linting."""
    c.run("flake8 rof_core rof_harness tests")
    c.run("black rof_core rof_harness tests --check")


@task(pre=[clean])
def build(c):
    """Build package distributions."""
    c.run("python -m build")


@task
def reproduce(c, workers=1):
    """Run every bundled scenario into results/."""
    c.run("mkdir -p results")
    for scenario in sorted(SCENARIOS.glob("*.toml")):
        config = toml.load(scenario)
        out = f"results/{scenario.stem}"
        if "positioning" in config:
            c.run(f"rof-sim position --scenario {scenario} --out {out}.position.csv --workers {workers}")
            continue
        c.run(f"rof-sim simulate --scenario {scenario} --out {out}.csv --workers {workers} --dump-trials")
        if config.get("estimator", {}).get("kind", "ml") == "ml":
            c.run(f"rof-sim crlb --scenario {scenario} --out {out}.crlb.csv")


@task
def update_version(c, new_version=None, part="patch"):
    """Update package version in pyproject.toml and rof_core/__init__.py."""
    if not Path("pyproject.toml").exists():
        raise Exception("pyproject.toml not found")

    # Read current version
    config = toml.loads(Path("pyproject.toml").read_text())
    current_version = config["project"]["version"]

    # Calculate new version
    if new_version is None:
        new_version = str(semver.VersionInfo.parse(current_version).bump_patch())
        if part == "minor":
            new_version = str(semver.VersionInfo.parse(current_version).bump_minor())
        elif part == "major":
            new_version = str(semver.VersionInfo.parse(current_version).bump_major())

    config["project"]["version"] = new_version
    Path("pyproject.toml").write_text(toml.dumps(config))

    init = Path("rof_core/__init__.py")
    init.write_text(re.sub(r'__version__ = "[^"]+"', f'__version__ = "{new_version}"', init.read_text()))

    print(f"Version updated from {current_version} to {new_version}")
    return new_version


@task
def show_version(c):
    """Show current version from pyproject.toml."""
    config = toml.loads(Path("pyproject.toml").read_text())
    print(f"{config['project']['version']}")
