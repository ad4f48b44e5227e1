"""
Allow running the package with python -m tfea_lab
"""

from tfea_lab.main import main

if __name__ == "__main__":
    main()
