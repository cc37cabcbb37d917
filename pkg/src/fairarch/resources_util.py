"""Access to data files shipped inside the package."""

from importlib import resources


def read_packaged(name: str) -> str:
    return resources.files("fairarch.data").joinpath(name).read_text("utf-8")
