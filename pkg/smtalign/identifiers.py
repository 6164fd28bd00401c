from dataclasses import dataclass

from smtalign.config import Config


@dataclass
class ArtifactNames:
    """Logic for deriving artifact file names from the `artifacts` config section."""

    config: Config

    @property
    def _settings(self) -> dict:
        return self.config.section('artifacts')

    def _setting(self, name: str) -> str:
        settings = self._settings
        if name not in settings:
            raise ValueError(f"artifacts.{name} is not configured")
        return str(settings[name])

    @property
    def dataset_filename(self) -> str:
        """Generate the dataset filename, like 'dataset.csv'."""
        return f"{self._setting('dataset_stem')}.csv"

    @property
    def dataset_metadata_filename(self) -> str:
        """Generate the dataset sidecar filename, like 'dataset.meta.json'."""
        return f"{self._setting('dataset_stem')}.{self._setting('metadata_suffix')}.{self._setting('extension')}"

    @property
    def manifest_filename(self) -> str:
        return self._setting('manifest_filename')

    @property
    def split_filename(self) -> str:
        return self._setting('split_filename')

    @property
    def contexts_filename(self) -> str:
        return self._setting('contexts_filename')

    @property
    def report_json_filename(self) -> str:
        """Like 'report.json'."""
        return f"{self._setting('report_stem')}.{self._setting('extension')}"

    @property
    def report_text_filename(self) -> str:
        return f"{self._setting('report_stem')}.txt"

    @property
    def residuals_filename(self) -> str:
        return self._setting('residuals_filename')

    @property
    def recommendations_filename(self) -> str:
        return self._setting('recommendations_filename')

    @property
    def predictions_filename(self) -> str:
        return self._setting('predictions_filename')

    def model_filename(self, kind: str, target: str) -> str:
        """Generate a model filename, like 'rfr.post_x.model.json'."""
        return f"{kind}.{target}.{self._setting('model_suffix')}.{self._setting('extension')}"

    def config_echo_filename(self, command: str) -> str:
        """Generate the config echo filename of a command, like 'train.config.json'."""
        return f"{command}.{self._setting('config_suffix')}.{self._setting('extension')}"

    def trace_filename(self, index: int) -> str:
        """Generate the ES trace filename of a context, like 'trace.0.csv'."""
        return f"{self._setting('trace_stem')}.{index}.csv"

    def extract_kind_target_from_filename(self, filename: str) -> tuple[str, str]:
        """Extract (kind, target) from a model filename like 'svr.post_theta.model.json'."""
        suffix = f".{self._setting('model_suffix')}.{self._setting('extension')}"
        if not filename.endswith(suffix):
            raise ValueError(f"'{filename}' is not a model filename (expected suffix '{suffix}')")
        parts = filename[:-len(suffix)].split('.')
        if len(parts) != 2:
            raise ValueError(f"'{filename}' is not a model filename (expected '<kind>.<target>{suffix}')")
        return parts[0], parts[1]
