"""
Shared runner for the test scripts: each script can run standalone or under pytest
"""
import logging
import time


def run_tests(title, tests):
    """Run (name, fn) pairs, printing one line per test; returns a process exit code"""
    logging.basicConfig(level=logging.WARNING, format='%(levelname)s: %(message)s')
    print(f"🧪 {title}")
    print("=" * 60)
    passed = 0
    started = time.monotonic()
    for test_name, test_func in tests:
        try:
            test_func()
            passed += 1
            print(f"✅ {test_name}")
        except AssertionError as e:
            print(f"❌ {test_name} FAILED: {e}")
        except Exception as e:
            print(f"❌ {test_name} ERROR: {type(e).__name__}: {e}")

    print(f"\n{'='*60}")
    print(f"📊 Test Results: {passed}/{len(tests)} tests passed in {time.monotonic() - started:.1f}s")
    if passed == len(tests):
        print("🎉 All tests passed!")
        return 0
    print("❌ Some tests failed. Please check the errors above.")
    return 1
