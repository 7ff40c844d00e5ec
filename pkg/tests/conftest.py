import sys
from pathlib import Path

# Test-local helpers (hash_oracle, replay_oracle, helpers) import as plain modules.
sys.path.insert(0, str(Path(__file__).parent))
