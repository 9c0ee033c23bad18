import logging
import sys
import warnings

from src.core.config import ConfigManager
from src.ui.cli import main

# Suppress noisy scipy runtime warnings; failures surface as NumericalError
warnings.filterwarnings("ignore", category=RuntimeWarning, module="scipy")

if __name__ == "__main__":
    level = ConfigManager().get_section('logging').get('level', 'WARNING')
    logging.basicConfig(
        stream=sys.stderr,
        level=getattr(logging, str(level).upper(), logging.WARNING),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    sys.exit(main())
