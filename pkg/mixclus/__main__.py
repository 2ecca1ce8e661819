"""Entry point for ``python -m mixclus``"""

from mixclus.cli import main

if __name__ == "__main__":
    main()
