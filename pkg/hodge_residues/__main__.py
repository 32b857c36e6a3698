"""Allow running as: python -m hodge_residues"""
from hodge_residues.cli import main
import sys

if __name__ == "__main__":
    sys.exit(main())
