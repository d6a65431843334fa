import os
from setuptools import setup, find_packages

# Ensure the README file is read from the correct directory
this_directory = os.path.abspath(os.path.dirname(__file__))
readme_path = os.path.join(this_directory, "README.md")

# Read the README file
with open(readme_path, "r", encoding="utf-8") as f:
    long_description = f.read()

setup(
    name="diar_dialogue",
    version="0.1.0",
    description="Diarization-conditioned multi-turn ASR data pipeline and "
                "multi-speaker scoring",
    long_description=long_description,
    long_description_content_type="text/markdown",
    license="MIT",
    packages=find_packages(exclude=["tests", "tests.*"]),
    install_requires=[
        "numpy>=1.24.0",
        "pandas>=2.0.0",
        "scipy>=1.10.0",
        "tqdm>=4.5.0",
    ],
    python_requires=">=3.10",            # PEP 604 unions in annotations
    entry_points={
        "console_scripts": [
            "diar-dialogue = diar_dialogue.cli:main",
        ],
    },
    classifiers=[                        # Metadata for PyPI
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ],
)
