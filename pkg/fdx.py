#!/usr/bin/env python3
"""
FDX testing toolkit entry point.

    python fdx.py test --input zvalues.txt --gamma 0.1 --alpha 0.05
    python fdx.py simulate --preset table1 --reps 200
    python fdx.py bench --m 10000
"""
import sys

from src.cli import main

if __name__ == "__main__":
    sys.exit(main())
