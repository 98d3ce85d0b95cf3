"""Packaging for the fracground library."""
from setuptools import find_packages, setup


def get_version():
    """Get library version."""
    with open("VERSION") as f:
        return f.read().strip()


setup(
    name="fracground",
    version=get_version(),
    url="",
    packages=find_packages(exclude=["tests", "tests.*"]),
    include_package_data=True,
    python_requires=">=3.8",
    install_requires=open("requirements.in").readlines(),
    tests_require=open("requirements.testing.in").readlines(),
    entry_points={"console_scripts": ["fracground = fracground.cli:main"]},
    description="Ground states of (-Delta)^s u + u = |u|^(p-1) u on periodic grids, with certificates",
    long_description="\n" + open("README.md").read(),
)
