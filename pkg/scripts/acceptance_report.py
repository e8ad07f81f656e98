"""Run the acceptance gate and collect its PASS/FAIL lines.

    python3 scripts/acceptance_report.py [report.txt]
"""

import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def main():
    proc = subprocess.run([sys.executable, "-m", "pytest", "tests/test_acceptance.py", "-q", "-p",
                           "no:cacheprovider"], cwd=ROOT, capture_output=True, text=True)
    lines = [ln for ln in proc.stdout.splitlines() if ln.startswith(("PASS criterion", "FAIL criterion"))]
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if len(sys.argv) > 1:
        Path(sys.argv[1]).write_text(text)
    if len(lines) != 10:
        sys.stdout.write(proc.stdout[-2000:])
    return 0 if proc.returncode == 0 else 1


if __name__ == "__main__":
    sys.exit(main())
