"""Set up espsim package."""

# Authors: The espsim developers
# License: AGPL

from setuptools import setup


if __name__ == "__main__":
    setup()
