#!/usr/bin/env python3
"""
Setup script for rg-lattice

`python setup.py bootstrap` prepares a working checkout (dependencies, .env, output
directory, kernel compilation). Any other command is handed to setuptools.
"""
import subprocess
import shutil
import sys
from pathlib import Path

MODULES = [
    "cascade_stats",
    "cli",
    "config",
    "errors",
    "experiment_config",
    "experiments",
    "flow_algebra",
    "lattice",
    "reports",
    "rg_spectral",
    "run_store",
    "stochastic_rg",
    "worker_pool",
]


def run_command(command, description):
    """Run a command and handle errors"""
    print(f"🔄 {description}...")
    try:
        subprocess.run(command, shell=True, check=True, capture_output=True, text=True)
        print(f"✅ {description} completed")
        return True
    except subprocess.CalledProcessError as e:
        print(f"❌ {description} failed: {e.stderr}")
        return False


def check_python_version():
    """Check if Python version is compatible"""
    print("🐍 Checking Python version...")
    if sys.version_info < (3, 9):
        print("❌ Python 3.9 or higher is required")
        return False
    print(f"✅ Python {sys.version.split()[0]} is compatible")
    return True


def install_dependencies():
    """Install Python dependencies"""
    print("📦 Installing Python dependencies...")
    return run_command(f"{sys.executable} -m pip install -r requirements.txt", "Installing dependencies")


def create_env_file():
    """Create .env file from template"""
    print("⚙️  Setting up environment configuration...")

    env_file = Path(".env")
    env_example = Path("env.example")

    if env_file.exists():
        print("✅ .env file already exists")
        return True

    if env_example.exists():
        shutil.copy(env_example, env_file)
        print("✅ Created .env file from template")
        return True
    else:
        print("⚠️  env.example file not found; built-in defaults apply")
        return True


def create_output_directory():
    """Create the default output root"""
    print("📁 Creating output directory...")
    from config import settings

    Path(settings.output_dir).mkdir(parents=True, exist_ok=True)
    print(f"✅ Output root: {settings.output_dir}")
    return True


def compile_kernels():
    """Trigger numba compilation of the tick kernel once so later runs hit the cache"""
    print("⚙️  Compiling lattice kernels...")
    try:
        import numpy as np
        from lattice import LatticeState, TransferFamily, TransferSpec, advance, make_config, transfer_fraction

        for family in TransferFamily:
            spec = TransferSpec(family=family)
            transfer_fraction(spec, 1.0, 0.5)
            advance(LatticeState(np.linspace(1.0, 0.0, 5)), make_config(4, 0.25, spec), 16)
        print("✅ Kernels compiled")
        return True
    except Exception as e:
        print(f"❌ Kernel compilation failed: {e}")
        return False


def bootstrap():
    """Main setup function"""
    print("🚀 rg-lattice Setup")
    print("=" * 50)

    if not check_python_version():
        sys.exit(1)

    if not install_dependencies():
        print("❌ Failed to install dependencies")
        sys.exit(1)

    create_env_file()
    create_output_directory()

    if not compile_kernels():
        sys.exit(1)

    print("\n🎉 Setup completed successfully!")
    print("\n📋 Next steps:")
    print("1. Check the installation: python test_installation.py")
    print("2. Run the identity checks: python cli.py verify")
    print("3. List the experiments: python cli.py list")
    print("   - Demo: python demo.py")
    print("\n📚 For more information, see README.md")


def read_requirements():
    return [
        line.strip()
        for line in Path(__file__).with_name("requirements.txt").read_text().splitlines()
        if line.strip() and not line.startswith("#")
    ]


if __name__ == "__main__" and sys.argv[1:2] == ["bootstrap"]:
    bootstrap()
else:
    from setuptools import setup

    setup(
        name="rg-lattice",
        version="1.0.0",
        description="Simulations and renormalization-group analysis of a fractal space-time lattice cascade model",
        python_requires=">=3.9",
        py_modules=MODULES,
        install_requires=read_requirements(),
        entry_points={"console_scripts": ["rg-lattice=cli:main"]},
    )
