#!/usr/bin/env python3
"""
AFL 求解器 - 快速測試腳本

此腳本用於確認依賴、語料與各個模組是否正常工作；
直接執行會印出每一項的結果，pytest 只跑不需要求解器的部分。
"""

import importlib
import sys
from pathlib import Path

CORPUS = Path(__file__).parent / "corpus"


def check_imports():
    """測試Python庫導入"""
    print("🔍 測試Python庫導入...")

    for package, purpose in [("numpy", "成長率擬合"), ("networkx", "控制流圖的 SCC"),
                             ("hypothesis", "性質測試")]:
        try:
            importlib.import_module(package)
            print(f"✅ {package} - {purpose}")
        except ImportError:
            print(f"❌ {package} - 請運行: pip install {package}")
            return False

    try:
        import z3  # noqa: F401
        print("✅ z3-solver - 行程內 LIA 後端")
    except ImportError:
        print("⚠️ z3-solver 未安裝，將使用外部求解器或內建 fallback")

    return True


def check_corpus():
    """測試語料檔案"""
    print("\n📁 測試語料檔案...")

    if not CORPUS.is_dir():
        print(f"❌ 語料目錄不存在: {CORPUS}")
        return False

    files = sorted(CORPUS.glob("*.afl"))
    for path in files:
        expect = path.with_suffix(".expect")
        if not expect.exists():
            print(f"❌ {path.name} - 缺少 .expect")
            return False
        print(f"✅ {path.name} ({expect.read_text(encoding='utf-8').strip()})")
    return bool(files)


def check_main_modules():
    """測試主要模塊"""
    print("\n📦 測試主要模塊...")

    for module in ["afl_ast", "afl_parser", "evaluator", "scm", "lia", "lia_backend",
                   "encoder", "modelgen", "pipeline", "main"]:
        try:
            importlib.import_module(module)
            print(f"✅ {module}.py")
        except ImportError as e:
            print(f"❌ {module}.py - 導入失敗: {e}")
            return False
    return True


def check_backends():
    """測試LIA後端設定"""
    print("\n⚙️ 測試LIA後端...")

    from lia_backend import SolverConfig, external_available, z3_available

    try:
        cfg = SolverConfig.from_env()
    except ValueError as e:
        print(f"❌ 設定錯誤: {e}")
        return False

    print(f"✅ 後端選擇: {cfg.choice}, 逾時 {cfg.timeout}s")
    if external_available(cfg):
        print(f"✅ 外部求解器: {' '.join(cfg.command)}")
    else:
        print("⚠️ 找不到外部求解器")
    print(f"{'✅' if z3_available() else '⚠️'} 行程內 z3")
    return True


def check_pipeline():
    """測試完整求解流程"""
    print("\n🚀 測試求解流程...")

    from afl_parser import parse_file
    from evaluator import eval_formula
    from lia_backend import SAT, SolverConfig
    from pipeline import solve_formula

    try:
        formula = parse_file(CORPUS / "boundedness.afl")
        print("⏳ 求解 boundedness.afl ...")
        result = solve_formula(formula, SolverConfig.from_env())
    except Exception as e:
        print(f"❌ 求解失敗: {e}")
        return False

    if result.status != SAT:
        print(f"❌ 預期 sat，得到 {result.status} ({result.reason})")
        return False
    print(f"✅ sat，陣列長度 {result.array_length}，後端 {result.backend}")
    return eval_formula(formula, result.model)


def test_smoke_checks():
    assert check_imports()
    assert check_corpus()
    assert check_main_modules()


def main():
    """主測試函數"""
    print("🧪 AFL 求解器 - 快速測試")
    print("=" * 50)

    tests = [
        ("Python庫導入", check_imports),
        ("語料檔案", check_corpus),
        ("主要模塊", check_main_modules),
        ("LIA後端", check_backends),
        ("求解流程", check_pipeline),
    ]

    passed = 0
    total = len(tests)

    for test_name, test_func in tests:
        print(f"\n{'='*20} {test_name} {'='*20}")
        try:
            if test_func():
                passed += 1
                print(f"✅ {test_name} - 通過")
            else:
                print(f"❌ {test_name} - 失敗")
        except Exception as e:
            print(f"❌ {test_name} - 錯誤: {e}")

    print("\n" + "=" * 50)
    print(f"測試結果: {passed}/{total} 通過")

    if passed == total:
        print("🎉 所有測試通過！")
        print("\n下一步:")
        print("1. 運行: python run_afl_solver.py solve corpus/min_max_balance.afl --model")
        print("2. 運行: python run_afl_solver.py bench corpus --jobs 4")
    else:
        print("⚠️ 部分測試失敗，請修復問題後重新測試")

    return passed == total


if __name__ == "__main__":
    success = main()
    sys.exit(0 if success else 1)
