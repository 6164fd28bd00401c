import logging
import os
from dataclasses import dataclass
from typing import Dict, List, Optional

from smtalign.config import Config
from smtalign.identifiers import ArtifactNames
import smtalign.util as util

logger = logging.getLogger(__name__)


class ChecksumMismatchError(ValueError):
    """A file does not match the checksum recorded in the manifest."""


class ManifestEntry:
    """Represents a single entry in the manifest, containing the checksum and file metadata."""

    def __init__(self, filename: str, md5hash: Optional[str] = None, **kwargs):
        self.filename = filename
        self.md5hash = md5hash
        self.metadata = kwargs  # extra fields like Kind, Target, Command

    def to_dict(self) -> dict:
        return {'MD5Hash': self.md5hash, **self.metadata}

    @classmethod
    def from_dict(cls, filename: str, data: dict) -> 'ManifestEntry':
        data = dict(data)
        md5hash = data.pop('MD5Hash', None)
        return cls(filename, md5hash, **data)

    @classmethod
    def create_entry_for_file(cls, directory: str, filename: str, **metadata) -> 'ManifestEntry':
        return cls(filename, util.calculate_md5(os.path.join(directory, filename)), **metadata)


class Manifest:
    """
    Manifest of the files in an output directory. Stored as JSON, mapping each file name to
    its MD5 checksum and metadata.
    """

    def __init__(self, save_directory: str, config: Optional[Config] = None):
        self.save_directory = str(save_directory)
        self._cfg = config or Config.get_instance()
        self.entries: Dict[str, ManifestEntry] = {}
        self.is_modified = False

    @property
    def manifest_file_path(self) -> str:
        return os.path.join(self.save_directory, ArtifactNames(self._cfg).manifest_filename)

    @classmethod
    def load_existing(cls, save_directory: str, config: Optional[Config] = None) -> 'Manifest':
        manifest = cls(save_directory, config)
        if not os.path.exists(manifest.manifest_file_path):
            raise FileNotFoundError(f"Manifest file not found at '{manifest.manifest_file_path}'")
        manifest.load(manifest.manifest_file_path)
        return manifest

    @classmethod
    def load_or_create(cls, save_directory: str, config: Optional[Config] = None) -> 'Manifest':
        """Load the directory's manifest, or start an empty one."""
        manifest = cls(save_directory, config)
        if os.path.exists(manifest.manifest_file_path):
            manifest.load(manifest.manifest_file_path)
        return manifest

    def add_file(self, filename: str, **metadata) -> ManifestEntry:
        """Add or replace the entry of a file in the directory, computing its checksum."""
        entry = ManifestEntry.create_entry_for_file(self.save_directory, filename, **metadata)
        self.entries[filename] = entry
        self.is_modified = True
        return entry

    def get_entry(self, filename: str) -> Optional[ManifestEntry]:
        return self.entries.get(filename)

    def get_filenames(self) -> List[str]:
        return sorted(self.entries)

    def save(self) -> None:
        """Save the manifest, but only if it has been modified."""
        if self.is_modified:
            util.write_json(self.manifest_file_path,
                            {filename: entry.to_dict() for filename, entry in sorted(self.entries.items())})
            self.is_modified = False
            logger.info("Saved manifest %s (%d files)", self.manifest_file_path, len(self.entries))

    def load(self, input_file: str) -> None:
        entries_dict = util.read_json(input_file)
        self.entries = {
            filename: ManifestEntry.from_dict(filename, data)
            for filename, data in entries_dict.items()
        }
        self.is_modified = False

    def validate(self, filenames: Optional[List[str]] = None) -> None:
        """
        Check that the given files (all entries by default) exist and match their checksums.
        Files named but not listed in the manifest count as mismatches.
        """
        filenames = self.get_filenames() if filenames is None else filenames
        missing, mismatched = [], []
        for filename in filenames:
            file_path = os.path.join(self.save_directory, filename)
            if not os.path.exists(file_path):
                missing.append(filename)
                continue
            entry = self.entries.get(filename)
            if entry is None or util.calculate_md5(file_path) != entry.md5hash:
                mismatched.append(filename)
        if missing:
            raise FileNotFoundError(f"Files missing in {self.save_directory}: {missing}")
        if mismatched:
            raise ChecksumMismatchError(f"Files do not match the manifest in {self.save_directory}: {mismatched}")


@dataclass(frozen=True)
class SplitManifest:
    """Record indices of a dataset split, with the seed and the checksum of the dataset."""

    seed: int
    dataset_md5: str
    train_index: tuple[int, ...]
    validation_index: tuple[int, ...]
    test_index: tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "dataset_md5": self.dataset_md5,
            "train": list(self.train_index),
            "validation": list(self.validation_index),
            "test": list(self.test_index),
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'SplitManifest':
        return cls(
            seed=int(data["seed"]),
            dataset_md5=str(data["dataset_md5"]),
            train_index=tuple(int(i) for i in data["train"]),
            validation_index=tuple(int(i) for i in data["validation"]),
            test_index=tuple(int(i) for i in data["test"]),
        )

    def save(self, file_path) -> None:
        util.write_json(file_path, self.to_dict())

    @classmethod
    def load(cls, file_path) -> 'SplitManifest':
        if not os.path.exists(file_path):
            raise FileNotFoundError(f"Split file not found: {file_path}")
        return cls.from_dict(util.read_json(file_path))
