import copy
import dataclasses
import inspect
from pathlib import Path
from typing import Any, ClassVar, Mapping, Optional, TypeVar

import yaml
from appdirs import user_config_dir

from smtalign.util import config_hash, deep_merge

T = TypeVar("T")


class ConfigError(ValueError):
    """Invalid or unknown configuration setting; the message names section and field."""


class ConfigFileLocator:
    """Responsible for finding configuration files in the filesystem."""

    def __init__(self, config_filename: str, package_name: str):
        self.config_filename = config_filename
        self.package_name = package_name

    def find_config_file(self) -> Optional[str]:
        r"""Find the configuration file in various locations.

        The file will be searched in the following locations, in order:
        1. The directory of the script that uses the library
        2. The current working directory
        3. The user's config directory:
           - Windows: %LOCALAPPDATA%\{package_name}\{filename}
           - macOS: ~/Library/Application Support/{package_name}/{filename}
           - Linux: ~/.config/{package_name}/{filename}

        Returns:
            Optional[str]: Path to the first found configuration file, or None if not found.
        """
        config_file = Path(self.config_filename)

        script_dir = self._calling_script_dir()
        if script_dir is not None:
            if (script_dir / config_file).is_file():
                return str(script_dir / config_file)

        cwd = Path.cwd()
        if (cwd / config_file).is_file():
            return str(cwd / config_file)

        user_dir = Path(user_config_dir(self.package_name))
        if (user_dir / config_file).is_file():
            return str(user_dir / config_file)

        return None

    def _calling_script_dir(self) -> Optional[Path]:
        # first frame outside this package
        package_dir = Path(__file__).resolve().parent
        for frame in inspect.stack()[1:]:
            frame_path = Path(frame.filename).resolve()
            if package_dir not in frame_path.parents and frame_path.is_file():
                return frame_path.parent
        return None


class Config:
    """Configuration class for managing application settings.

    Settings come from the packaged defaults.yaml, with the user's YAML (or JSON) file
    deep-merged over them. Sections are read with section(); top-level settings as attributes.
    """
    _instance: ClassVar[Optional['Config']] = None
    _config_filename: ClassVar[str] = 'config.yaml'
    _package_name: ClassVar[str] = 'smtalign'
    _defaults_file: ClassVar[Path] = Path(__file__).with_name('defaults.yaml')

    def __init__(self, config_file: Optional[str] = None) -> None:
        """Private constructor, use initialize() or get_instance() instead."""
        if self._instance is not None:
            raise RuntimeError("Use Config.initialize() or Config.get_instance()")

        self._settings: dict[str, Any] = self._load_settings_from_file(self._defaults_file)
        self._source: Optional[str] = None

        if config_file is None:
            locator = ConfigFileLocator(self._config_filename, self._package_name)
            config_file = locator.find_config_file()

        if config_file is not None:
            user_settings = self._load_settings_from_file(config_file)
            self._settings = deep_merge(self._settings, user_settings)
            self._source = str(config_file)

    @staticmethod
    def _load_settings_from_file(config_file) -> dict[str, Any]:
        """Load configuration settings from a YAML (or JSON) file."""
        try:
            with open(config_file, 'r', encoding='utf-8') as f:
                settings = yaml.safe_load(f) or {}
        except OSError:
            raise
        except Exception as e:
            raise ConfigError(f"Error loading config file {config_file}: {e}")
        if not isinstance(settings, dict):
            raise ConfigError(f"Config file {config_file} must contain a mapping at top level")
        return settings

    @classmethod
    def get_instance(cls) -> 'Config':
        """Get the global Config instance, initializing it if needed."""
        if cls._instance is None:
            cls._instance = cls()
        return cls._instance

    @classmethod
    def initialize(cls, config_file: Optional[str] = None) -> 'Config':
        """Initialize a new Config instance."""
        if cls._instance is not None:
            return cls._instance
        cls._instance = cls(config_file=config_file)
        return cls._instance

    @classmethod
    def reset(cls) -> None:
        """Reset the singleton instance (mainly for testing)."""
        cls._instance = None

    @property
    def source(self) -> Optional[str]:
        """Path of the user config file merged over the defaults, if any."""
        return self._source

    @property
    def hash(self) -> str:
        return config_hash(self._settings)

    def section(self, name: str) -> dict[str, Any]:
        """Return a copy of a settings section; a missing section is empty."""
        value = self._settings.get(name, {})
        if value is None:
            return {}
        if not isinstance(value, dict):
            raise ConfigError(f"{name}: expected a mapping, got {type(value).__name__}")
        return copy.deepcopy(value)

    def as_dict(self) -> dict[str, Any]:
        return copy.deepcopy(self._settings)

    def __getattr__(self, name: str) -> Any:
        """Get a configuration setting. """
        if name.startswith('_'):
            raise AttributeError(name)
        if name in self._settings:
            return self._settings[name]
        raise AttributeError(f"Config has no setting '{name}'")

    def __setattr__(self, name: str, value: Any) -> None:
        """Only private attributes can be set; settings are read-only once loaded."""
        if not name.startswith('_'):
            raise ValueError(f"Cannot set setting '{name}': configuration is read-only")
        super().__setattr__(name, value)


def build_config(cls: type[T], mapping: Optional[Mapping[str, Any]], section: str) -> T:
    """
    Build a frozen config dataclass from a settings mapping.

    Unknown keys and values rejected by the dataclass are reported as ConfigError
    naming `section.field`.
    """
    mapping = dict(mapping or {})
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(mapping) - known)
    if unknown:
        raise ConfigError(f"{section}.{unknown[0]}: unknown setting")
    try:
        return cls(**mapping)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{section}.{e}") from e
