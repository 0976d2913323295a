from pathlib import Path

import yaml


class ConfigError(Exception):
    pass


class RazConfig:
    """Wrapper around the YAML config file that provides typed accessors.

    Behaviour:
    - If config_path is None, reads ./config/config.yaml relative to the project root.
    - Resolves relative folder paths against the project root.
    - Every numeric property falls back to a built-in default when the key is absent.
    """

    def __init__(self, config_path: str | None = None):
        # project root (src is inside repo root)
        self.project_root = Path(__file__).parent.parent.resolve()

        if config_path:
            path = Path(config_path)
            self.config_path = (
                (self.project_root / config_path).resolve()
                if not path.is_absolute()
                else path
            )
        else:
            self.config_path = self.project_root / "config" / "config.yaml"

        self.data = self._load_config()
        self._validate()

    def _load_config(self) -> dict:
        """Read and parse the YAML config file.

        Returns:
            The parsed config as a dict.

        Raises:
            ConfigError: if the file cannot be read or parsed.
        """
        try:
            with open(self.config_path, "r", encoding="utf-8") as f:
                return yaml.safe_load(f) or {}
        except FileNotFoundError:
            raise ConfigError(f"Config file not found: {self.config_path}")
        except Exception as e:
            raise ConfigError(f"Failed to read config file {self.config_path}: {e}")

    def _validate(self) -> None:
        """Check required keys and the shape of nested sections.

        Raises:
            ConfigError: if required keys are missing or a section has the wrong type.
        """
        if not isinstance(self.data, dict):
            raise ConfigError(f"Config root must be a mapping: {self.config_path}")

        required = ["report_folder"]
        missing = [k for k in required if k not in self.data]
        if missing:
            raise ConfigError(f"Missing required config keys: {', '.join(missing)}")

        for section in ("simulation", "sweep", "verify"):
            if section in self.data and not isinstance(self.data[section], dict):
                raise ConfigError(f"'{section}' must be a mapping/dict")

        for axis in ("mu", "sigma"):
            value = self.sweep.get(axis)
            if value is not None and (not isinstance(value, list) or len(value) != 3):
                raise ConfigError(f"'sweep.{axis}' must be a list [lo, hi, count]")

    # sections
    @property
    def simulation(self) -> dict:
        return self.data.get("simulation", {}) or {}

    @property
    def sweep(self) -> dict:
        return self.data.get("sweep", {}) or {}

    @property
    def verify(self) -> dict:
        return self.data.get("verify", {}) or {}

    # tolerances
    @property
    def root_tol(self) -> float:
        return float(self.data.get("root_tol", 1e-12))

    @property
    def fixed_point_tol(self) -> float:
        return float(self.data.get("fixed_point_tol", 1e-9))

    @property
    def gas_tol(self) -> float:
        return float(self.data.get("gas_tol", 1e-9))

    @property
    def quadrature_tol(self) -> float:
        return float(self.data.get("quadrature_tol", 1e-10))

    @property
    def max_iterations(self) -> int:
        return int(self.data.get("max_iterations", 10_000))

    @property
    def boundary_eps(self) -> float:
        return float(self.data.get("boundary_eps", 1e-9))

    # simulation
    @property
    def default_step(self) -> float:
        return float(self.simulation.get("step", 1e-3))

    @property
    def t_end(self) -> float:
        return float(self.simulation.get("t_end", 200.0))

    @property
    def tail_window(self) -> float:
        return float(self.simulation.get("tail_window", 50.0))

    @property
    def history_fraction(self) -> float:
        return float(self.simulation.get("history_fraction", 0.99))

    @property
    def noise_floor(self) -> float:
        return float(self.simulation.get("noise_floor", 1e-8))

    # sweep
    @property
    def grid_mu(self) -> tuple[float, float, int]:
        lo, hi, count = self.sweep.get("mu", [-3.0, -0.05, 200])
        return float(lo), float(hi), int(count)

    @property
    def grid_sigma(self) -> tuple[float, float, int]:
        lo, hi, count = self.sweep.get("sigma", [-3.2, -0.05, 200])
        return float(lo), float(hi), int(count)

    @property
    def sweep_order(self) -> int:
        return int(self.sweep.get("k", 2))

    # verification
    @property
    def verify_seed(self) -> int:
        return int(self.verify.get("seed", 20180417))

    @property
    def verify_samples(self) -> int:
        return int(self.verify.get("samples", 1000))

    @property
    def report_folder(self) -> str:
        return self._resolve_path(self.data["report_folder"])

    # helpers
    def _resolve_path(self, path_str: str) -> str:
        """Resolve a path string to an absolute path, handling ~."""
        if not path_str:
            return path_str

        path = Path(path_str).expanduser()

        # If relative, resolve against project root
        if not path.is_absolute():
            path = self.project_root / path

        return str(path.resolve())

    def __repr__(self) -> str:
        return f"RazConfig(path={self.config_path!r})"
