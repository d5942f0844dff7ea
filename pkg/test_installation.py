#!/usr/bin/env python3
"""
Test script to verify rg-lattice installation
"""
import sys
import asyncio
import logging
from pathlib import Path

# Configure logging
logging.basicConfig(level=logging.INFO, format='%(levelname)s: %(message)s')
logger = logging.getLogger(__name__)


def check_imports():
    """Test if all required packages can be imported"""
    print("🧪 Testing package imports...")

    required_packages = [
        ("numpy", "NumPy arrays and random streams"),
        ("numba", "Numba JIT compiler"),
        ("scipy", "SciPy statistics and fitting"),
        ("pandas", "pandas tables and CSV output"),
        ("pydantic", "Data validation"),
        ("pydantic_settings", "Environment settings"),
        ("asyncio", "Async support")
    ]

    failed_imports = []

    for package, name in required_packages:
        try:
            __import__(package)
            print(f"✅ {name}")
        except ImportError as e:
            print(f"❌ {name}: {e}")
            failed_imports.append(name)

    if failed_imports:
        print(f"\n❌ Failed to import: {', '.join(failed_imports)}")
        return False

    import numpy as np
    if not hasattr(np.random.Generator, "spawn"):
        print(f"❌ numpy {np.__version__} is too old (need >= 1.25)")
        return False

    print("✅ All packages imported successfully")
    return True


def check_config():
    """Test configuration"""
    print("\n⚙️  Testing configuration...")

    if not Path("config.py").exists():
        print("❌ config.py not found")
        return False

    if not Path(".env").exists():
        print("ℹ️  No .env file; using RG_LATTICE_* environment variables and defaults")

    try:
        from config import settings
        print(f"✅ Configuration loaded (preset={settings.preset}, seed={settings.seed}, threads={settings.threads})")
        return True
    except Exception as e:
        print(f"❌ Configuration error: {e}")
        return False


def check_kernels():
    """Test that the lattice kernels compile and run"""
    print("\n🔍 Testing lattice kernels...")

    try:
        from lattice import TransferFamily, TransferSpec, transfer_fraction

        fa = transfer_fraction(TransferSpec(family=TransferFamily.FA, p=5.0), 1.0, 0.5)
        fb = transfer_fraction(TransferSpec(family=TransferFamily.FB, p=10.3), 1.0, 0.5)
        if not (0.2 <= fa <= 0.4 and 0.1 <= fb <= 0.7):
            print(f"❌ Transfer fractions out of range: FA={fa}, FB={fb}")
            return False
        print("✅ Kernels compiled")
        return True
    except Exception as e:
        print(f"❌ Kernel compilation failed: {e}")
        print("   Try clearing numba's cache (__pycache__) and rerunning")
        return False


async def check_worker_pool():
    """Test the thread pool orchestration"""
    print("\n🤖 Testing worker pool...")

    try:
        from worker_pool import run_indexed_async

        squares = await run_indexed_async(lambda i: i * i, 10, threads=3)
        if squares != [i * i for i in range(10)]:
            print(f"❌ Pool returned {squares}")
            return False
        print("✅ Worker pool merges results by index")
        return True

    except Exception as e:
        print(f"❌ Worker pool test failed: {e}")
        return False


def check_registry():
    """Test experiment registry"""
    print("\n📋 Testing experiment registry...")

    try:
        from experiments import REGISTRY

        if len(REGISTRY) != 12:
            print(f"❌ Expected 12 experiments, found {len(REGISTRY)}")
            return False
        for name in REGISTRY:
            print(f"✅ Experiment {name} registered")
        return True

    except Exception as e:
        print(f"❌ Registry test failed: {e}")
        return False


def check_cli():
    """Test command line parser"""
    print("\n🖥️  Testing command line...")

    try:
        from cli import build_parser

        args = build_parser().parse_args(["fig5_collapse", "--set", "alphas=[0.25]", "--threads", "2"])
        if args.command != "fig5_collapse" or args.overrides != ["alphas=[0.25]"] or args.threads != 2:
            print("❌ Parser produced unexpected arguments")
            return False
        print("✅ Command line parser built")
        return True

    except Exception as e:
        print(f"❌ Command line test failed: {e}")
        return False


async def main():
    """Main test function"""
    print("🧪 rg-lattice - Installation Test")
    print("=" * 60)

    tests = [
        ("Package Imports", check_imports),
        ("Configuration", check_config),
        ("Lattice Kernels", check_kernels),
        ("Worker Pool", check_worker_pool),
        ("Experiment Registry", check_registry),
        ("Command Line", check_cli)
    ]

    passed = 0
    total = len(tests)

    for test_name, test_func in tests:
        print(f"\n{'='*20} {test_name} {'='*20}")

        try:
            if asyncio.iscoroutinefunction(test_func):
                result = await test_func()
            else:
                result = test_func()

            if result:
                passed += 1
                print(f"✅ {test_name} PASSED")
            else:
                print(f"❌ {test_name} FAILED")

        except Exception as e:
            print(f"❌ {test_name} ERROR: {e}")

    print(f"\n{'='*60}")
    print(f"📊 Test Results: {passed}/{total} tests passed")

    if passed == total:
        print("🎉 All tests passed! Installation is successful.")
        print("\n🚀 You can now run:")
        print("   - CLI: rg-lattice list")
        print("   - Checks: rg-lattice verify")
        print("   - Demo: python demo.py")
    else:
        print("❌ Some tests failed. Please check the errors above.")
        print("\n🔧 Common fixes:")
        print("   - Install missing packages: pip install -r requirements.txt")
        print("   - Upgrade numpy: pip install 'numpy>=1.25'")
        return 1

    return 0


if __name__ == "__main__":
    sys.exit(asyncio.run(main()))
