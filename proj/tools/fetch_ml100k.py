#!/usr/bin/env python3
# Copyright 2026 The STAR-GCN Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
# http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Materializes MovieLens-100K in its native layout (u.data, u1..u5 folds,
u.user, u.item).

Sources, in order of preference:
  --zip PATH   the official ml-100k.zip from GroupLens
  (default)    the copy bundled in the RecBole wheel, fetched with pip

The RecBole copy keeps u.data's line order, so the folds are rebuilt with the
same rule as the official mku.sh: fold i tests on lines (i-1)*20000..i*20000.
"""

import argparse
import os
import subprocess
import sys
import tempfile
import zipfile

GENRES = [
    "unknown", "Action", "Adventure", "Animation", "Children's", "Comedy",
    "Crime", "Documentary", "Drama", "Fantasy", "Film-Noir", "Horror",
    "Musical", "Mystery", "Romance", "Sci-Fi", "Thriller", "War", "Western",
]


def write_folds(lines, out):
    rows = [l.split("\t") for l in lines]

    def key(r):
        return (int(r[0]), int(r[1]))

    for i in range(1, 6):
        test = rows[(i - 1) * 20000:i * 20000]
        base = rows[:(i - 1) * 20000] + rows[i * 20000:]
        for name, part in (("u%d.test" % i, test), ("u%d.base" % i, base)):
            with open(os.path.join(out, name), "w") as f:
                for r in sorted(part, key=key):
                    f.write("\t".join(r) + "\n")


def from_official_zip(path, out):
    with zipfile.ZipFile(path) as z:
        for name in ("u.data", "u.user", "u.item", "u.occupation", "u.genre"):
            data = z.read("ml-100k/" + name)
            with open(os.path.join(out, name), "wb") as f:
                f.write(data)
        for i in range(1, 6):
            for suffix in ("base", "test"):
                name = "u%d.%s" % (i, suffix)
                with open(os.path.join(out, name), "wb") as f:
                    f.write(z.read("ml-100k/" + name))


def from_recbole(out):
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.check_call([sys.executable, "-m", "pip", "download",
                               "--no-deps", "recbole==1.2.1", "-d", tmp])
        wheel = [f for f in os.listdir(tmp) if f.endswith(".whl")][0]
        z = zipfile.ZipFile(os.path.join(tmp, wheel))
        prefix = "recbole/dataset_example/ml-100k/ml-100k."

        def table(ext):
            text = z.read(prefix + ext).decode("latin-1")
            return [l.split("\t") for l in text.splitlines()[1:] if l]

        inter = table("inter")
        data_lines = ["\t".join(r[:4]) for r in inter]
        with open(os.path.join(out, "u.data"), "w") as f:
            f.write("\n".join(data_lines) + "\n")
        write_folds(data_lines, out)

        with open(os.path.join(out, "u.user"), "w") as f:
            for r in table("user"):
                f.write("|".join(r[:5]) + "\n")

        with open(os.path.join(out, "u.item"), "w") as f:
            for r in table("item"):
                item_id, title, year = r[0], r[1], r[2]
                classes = set(r[3].split()) if len(r) > 3 else set()
                date = ("01-Jan-%s" % year) if year else ""
                flags = ["1" if g in classes else "0" for g in GENRES]
                f.write("|".join([item_id, title, date, "", ""] + flags) + "\n")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="data/ml-100k")
    parser.add_argument("--zip", default=None)
    args = parser.parse_args()
    os.makedirs(args.out, exist_ok=True)
    if args.zip:
        from_official_zip(args.zip, args.out)
    else:
        from_recbole(args.out)
    print("wrote", args.out)


if __name__ == "__main__":
    main()
