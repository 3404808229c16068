#!/usr/bin/env python3
"""
AFL 求解器 - 啟動程序

先檢查 Python 依賴與可用的 LIA 後端，再把參數交給 main.py。

使用方法:
    python run_afl_solver.py solve corpus/min_max_balance.afl --model
    python run_afl_solver.py bench corpus --jobs 4
"""

import sys

from lia_backend import SolverConfig, external_available, z3_available


def check_dependencies():
    """檢查必要的依賴包"""
    print("🔍 檢查系統依賴...", file=sys.stderr)

    required_packages = ["numpy", "networkx", "hypothesis"]
    missing_packages = []
    for package in required_packages:
        try:
            __import__(package)
        except ImportError:
            missing_packages.append(package)
            print(f"❌ {package} - 缺失", file=sys.stderr)

    if missing_packages:
        print(f"\n⚠️ 缺少依賴包: {', '.join(missing_packages)}", file=sys.stderr)
        print(f"請運行: pip install {' '.join(missing_packages)}", file=sys.stderr)
        return False
    return True


def check_backends():
    """至少要有一個後端；只剩 fallback 時提醒 unsat 的結論有範圍限制"""
    cfg = SolverConfig.from_env()
    if external_available(cfg):
        print(f"✅ 外部求解器: {' '.join(cfg.command)}", file=sys.stderr)
    elif z3_available():
        print("✅ 行程內 z3 模組", file=sys.stderr)
    else:
        print("⚠️ 沒有 z3，將使用內建 fallback (unsat 只在搜尋範圍內成立)", file=sys.stderr)
    return True


def main():
    checks = [
        ("Python依賴包", check_dependencies),
        ("LIA後端", check_backends),
    ]
    for check_name, check_func in checks:
        if not check_func():
            print(f"\n❌ {check_name} 檢查失敗，請修復上述問題後重新運行", file=sys.stderr)
            return 3

    from main import main as cli_main
    return cli_main(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
