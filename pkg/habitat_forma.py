"""
Command-line launcher.

USAGE:
    python habitat_forma.py run --config config/default.json --out out --jobs 4
    python habitat_forma.py validate --config config/default.json
    python habitat_forma.py sweep --config config/default.json --out out
    python habitat_forma.py shield --config config/default.json --membrane out/membrane.obj --out out_shield
"""
import sys

from src.main import main

if __name__ == "__main__":
    sys.exit(main())
