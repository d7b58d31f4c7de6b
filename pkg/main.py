"""
Command-line entry point.

    python main.py run configs/example1.env
    python main.py table T2 --out results/T2.csv
    python main.py scan configs/example1.env --zeta-min 1e-7 --zeta-max 1e-5 --points 40 --log-spaced
    python main.py stability configs/example3.env --phases 256
"""

import sys

from src.cli import main


# --- Entry Point ---
if __name__ == "__main__":
    sys.exit(main())
