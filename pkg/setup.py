import os

from dotenv import load_dotenv
from setuptools import find_packages, setup

load_dotenv()

PROJECT_NAME = os.getenv("PROJECT_NAME", "spikegrad")
PROJECT_VERSION = os.getenv("PROJECT_VERSION", "0.1.1")


setup(
    name=PROJECT_NAME,
    version=PROJECT_VERSION,
    description="Online gradient estimation for feed-forward spiking networks",
    package_data={"": ["spikegrad"]},
    include_package_data=True,
    zip_safe=False,
    packages=find_packages(include=["spikegrad", "spikegrad.*"]),
    install_requires=[
        "click",
        "numpy",
        "pandas",
        "pydantic>=2",
        "python-dotenv",
        "PyYAML",
        "rich",
        "scipy",
    ],
    extras_require={"dev": ["black", "pytest", "isort"], "shd": ["h5py"]},
    entry_points={"console_scripts": ["spikegrad=spikegrad.cli:main"]},
    python_requires=">=3.10",
)
