"""Write one API reference page per public condlab module."""

from pathlib import Path

import mkdocs_gen_files

PACKAGE = Path("src/condlab")
# ORM tables and helpers are documented through the classes that use them
SKIPPED = {"utils", "model"}


def public_modules():
    """Source files of the documented modules, packages first."""
    for path in sorted(PACKAGE.rglob("*.py")):
        if path.stem in SKIPPED or (path.stem.startswith("_") and path.stem != "__init__"):
            continue
        yield path


def page_of(path: Path):
    """Dotted module name and reference page of a source file."""
    parts = path.relative_to("src").with_suffix("").parts
    page = path.relative_to(PACKAGE).with_suffix(".md")
    if parts[-1] == "__init__":
        parts = parts[:-1]
        page = page.with_name("index.md")
    return parts, page


nav = mkdocs_gen_files.Nav()
for source in public_modules():
    parts, page = page_of(source)
    nav[parts] = page.as_posix()
    with mkdocs_gen_files.open(Path("reference", page), "w") as fd:
        fd.write(f"::: {'.'.join(parts)}\n")
    mkdocs_gen_files.set_edit_path(Path("reference", page), Path("..") / source)

with mkdocs_gen_files.open("reference/SUMMARY.txt", "w") as nav_file:
    nav_file.writelines(nav.build_literate_nav())
