from setuptools import find_packages, setup

setup(
    name="quant_lab",
    version="0.1",
    packages=find_packages(exclude=["tests"]),
    install_requires=["numpy", "scipy", "python-dotenv", "tqdm"],
    entry_points={"console_scripts": ["qlab=quant_lab.cli.main:main"]},
)
