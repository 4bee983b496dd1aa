from setuptools import setup

# editable installs with setuptools-only tooling; poetry-core builds the wheel
setup(
    name="condlab",
    package_dir={"": "src"},
    packages=[
        "condlab",
        "condlab.autodiff",
        "condlab.diagnostics",
        "condlab.harness",
        "condlab.library",
        "condlab.schema",
        "condlab.vitcore",
    ],
    entry_points={"console_scripts": ["condlab = condlab.harness.cli:main"]},
)
