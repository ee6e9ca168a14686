"""Module entry point: ``python -m hmof_vad``."""

from hmof_vad.cli import main

if __name__ == "__main__":
    main()
