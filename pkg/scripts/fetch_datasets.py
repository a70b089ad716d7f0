#!/usr/bin/env python3
"""Where to get the open tomography datasets and how to convert them.

This script does not download anything (the archives need a browser
login or are served from publisher sites); it documents the sources and
converts a downloaded raw export into MGV1.

Cathode (NMC-532/binder/pore), 253 x 252 x 252 voxels at 398 nm:
    Usseglio-Viretta et al., J. Electrochem. Soc. 165 (2018) A3403,
    segmented dataset distributed with that article's supplementary
    material ("hydrated" CBD variant).

Anode (Ni/YSZ/pore), 1900 x 1697 x 124 voxels at 65 nm:
    Hsu et al., J. Power Sources 386 (2018) 1,
    segmented PFIB-SEM dataset from the paper's data repository.

Both come as 8-bit greyscale stacks with black/grey/white = 0/127/255
encoding pore/metal-or-NMC/ceramic-or-binder. After exporting the stack
as one raw u8 volume in x-fastest order, convert with:

    microgen encode cathode.u8 cathode.mgv --format raw \
        --dims 253,252,252 --spacing 398 --map 0:0,127:1,255:2

then point the dataset-conditional acceptance tests at it:

    MICROGEN_CATHODE_DATA=$PWD/cathode.mgv pytest tests/test_acceptance.py -v -s
"""

import sys

if __name__ == "__main__":
    sys.stdout.write(__doc__)
