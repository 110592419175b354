# File handling utilities
# src/utils/file_handler.py
import hashlib
import json
import logging
import os
import shutil
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional

import pandas as pd
from shapely.geometry import mapping

from errors import InputFileError

logger = logging.getLogger(__name__)

CSV_FLOAT_FORMAT = '%.12g'


def open_input(path) -> Any:
    """Open a UTF-8 text input, raising InputFileError when it is missing or unreadable"""
    path = Path(path)
    if not path.exists():
        raise InputFileError(path)
    if not path.is_file():
        raise InputFileError(path, reason="is not a regular file")
    try:
        return open(path, 'r', encoding='utf-8', newline='')
    except OSError as e:
        raise InputFileError(path, reason=f"unreadable ({e.strerror})") from e


def sha256_file(path, chunk_size: int = 1 << 20) -> str:
    digest = hashlib.sha256()
    with open(path, 'rb') as handle:
        for chunk in iter(lambda: handle.read(chunk_size), b''):
            digest.update(chunk)
    return digest.hexdigest()


def write_csv(frame: pd.DataFrame, path) -> Path:
    """Write a table with LF endings and a fixed float format"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator='\n', float_format=CSV_FLOAT_FORMAT,
                 encoding='utf-8')
    return path


def write_json(payload: Any, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='\n') as handle:
        json.dump(payload, handle, indent=2, sort_keys=True, ensure_ascii=False)
        handle.write('\n')
    return path


def feature_collection(geometries: Mapping[str, Any], id_field: str,
                       properties: Optional[Mapping[str, Mapping[str, Any]]] = None,
                       metadata: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """
    Build a GeoJSON FeatureCollection from shapely geometries

    Args:
        geometries: unit id -> shapely geometry
        id_field: property name carrying the unit id
        properties: optional unit id -> extra properties
        metadata: optional top-level members (padding, projection, ...)
    """
    features = []
    for unit_id in sorted(geometries):
        props = {id_field: unit_id}
        if properties and unit_id in properties:
            props.update(properties[unit_id])
        features.append({
            'type': 'Feature',
            'properties': props,
            'geometry': mapping(geometries[unit_id]),
        })
    collection = {'type': 'FeatureCollection', 'features': features}
    if metadata:
        collection['metadata'] = metadata
    return collection


class StagedOutputs:
    """
    Collect a command's outputs in a staging directory and promote them on success

    A failed run removes the staging directory, so the output directory never
    holds files the manifest does not list.
    """

    def __init__(self, out_dir, tag: str):
        self.out_dir = Path(out_dir)
        self.staging = self.out_dir / f'.staging-{tag}-{os.getpid()}'
        self.files: List[str] = []

    def __enter__(self) -> 'StagedOutputs':
        self.out_dir.mkdir(parents=True, exist_ok=True)
        if self.staging.exists():
            shutil.rmtree(self.staging)
        self.staging.mkdir()
        return self

    def path(self, name: str) -> Path:
        if name not in self.files:
            self.files.append(name)
        return self.staging / name

    def csv(self, frame: pd.DataFrame, name: str) -> Path:
        return write_csv(frame, self.path(name))

    def json(self, payload: Any, name: str) -> Path:
        return write_json(payload, self.path(name))

    def digests(self) -> Dict[str, str]:
        """sha256 of every staged file, keyed by name"""
        return {name: sha256_file(self.staging / name) for name in sorted(self.files)
                if (self.staging / name).exists()}

    def promote(self, last: Optional[str] = None) -> List[str]:
        """
        Move staged files into the output directory

        Args:
            last: Name moved after every other file, so it only appears once they all have

        Returns:
            The promoted names
        """
        names = [n for n in sorted(self.files) if n != last and (self.staging / n).exists()]
        if last is not None and (self.staging / last).exists():
            names.append(last)
        for name in names:
            os.replace(self.staging / name, self.out_dir / name)
        shutil.rmtree(self.staging, ignore_errors=True)
        return names

    def __exit__(self, exc_type, exc, tb) -> None:
        if exc_type is not None:
            logger.debug(f"Discarding staged outputs in {self.staging}")
            shutil.rmtree(self.staging, ignore_errors=True)
