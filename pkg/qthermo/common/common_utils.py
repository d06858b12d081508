import glob
import math
import os
import warnings


def create_folders(foldernames, parent_path="./"):
    """Checks existence of given folder names, creates if not exists.

    Args:
        foldernames: list of str, folder names to be checked/created.
        parent_path: str, parent path where to create folders.
    """
    for foldername in foldernames:
        target_dir = os.path.join(parent_path, foldername)
        if not os.path.isdir(target_dir):
            os.makedirs(target_dir)


def expand_input_paths(patterns):
    """Expands glob patterns of input documents into a sorted file list.

    To use:
    >>> expand_input_paths(["share/data/*.json"])

    Args:
        patterns: list of str, file paths or glob patterns.

    Returns:
        list of str, existing files, duplicates removed, order kept per
        pattern.
    """
    found = []
    for pattern in patterns:
        matched = sorted(glob.glob(pattern, recursive=True))
        if not matched and os.path.isfile(pattern):
            matched = [pattern]
        if not matched:
            warnings.warn("No input file matches {}.".format(pattern))
        for path in matched:
            if path not in found:
                found.append(path)
    if len(found) == 0:
        warnings.warn("Empty input file list, please check input.")
    # same basename means clashing report names
    names = [os.path.splitext(os.path.basename(path))[0] for path in found]
    if len(set(names)) != len(names):
        warnings.warn("Same input file name detected, reports may be overwritten.")
    return found


def get_newest_file_version(path_pattern, n_digit=2, ver_num=None):
    """Check existed file and return last available file path with version.

    Version range 00 -> 99 (or 999)
    If reach limit, last available version will be used. 99/999
    """
    # return file path if ver_num is given
    if ver_num is not None:
        return {
            "ver_num": ver_num,
            "path": path_pattern.format(str(ver_num).zfill(n_digit)),
        }
    # otherwise try to find ver_num
    max_version = int(math.pow(10, n_digit) - 1)
    ver_num = 0
    path = path_pattern.format(str(ver_num).zfill(n_digit))
    while os.path.exists(path):
        ver_num += 1
        path = path_pattern.format(str(ver_num).zfill(n_digit))
    if ver_num > max_version:
        warnings.warn(
            "Too many output versions detected at same date. "
            "Will only keep maximum {} different versions.".format(max_version)
        )
        warnings.warn("Version {} will be overwritten!".format(max_version))
        ver_num = max_version
    return {
        "ver_num": ver_num,
        "path": path_pattern.format(str(ver_num).zfill(n_digit)),
    }


def has_none(list):
    """Checks whether list has a "None" value element."""
    for ele in list:
        if ele is None:
            return True
    return False
