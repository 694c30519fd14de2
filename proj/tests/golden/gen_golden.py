#!/usr/bin/env python3
# Copyright (c) 2026 The tpm2eid Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Generates listings_golden.json: an independent computation of the policy
hash chains the engine must reproduce, using nothing but hashlib.

The synthetic section replays the shipped eid_sign.pol fixture against fixed
object names (see docs/policy-digests.md for the formulas and
docs/state-format.md for the serializations this script restates).

Run from the repository root:  python3 tests/golden/gen_golden.py
"""

import hashlib
import json
import os

H = lambda b: hashlib.sha256(b).digest()

ALG_SHA256 = 0x000B
SCHEME_ED25519 = 0x0060

CC_POLICY_NV = 0x00000149
CC_POLICY_SECRET = 0x00000151
CC_SIGN = 0x0000015D
CC_POLICY_AUTHORIZE = 0x0000016A
CC_POLICY_AUTHVALUE = 0x0000016B
CC_POLICY_COMMAND_CODE = 0x0000016C
CC_POLICY_COUNTER_TIMER = 0x0000016D
CC_POLICY_OR = 0x00000171
CC_POLICY_PCR = 0x0000017F

EO_EQ = 0x0000
EO_LT = 0x0005

ZERO = b"\x00" * 32


def be(v, n):
    return v.to_bytes(n, "big")


def field(b):
    return be(len(b), 4) + b


def digest_wire(d):
    return be(ALG_SHA256, 2) + d


def name_of(public_area):
    return be(ALG_SHA256, 2) + H(public_area)


def external_key_area(pub):
    return field(b"\x03") + field(pub) + field(be(SCHEME_ED25519, 2))


def nv_area(index, size, attr_bits, policy):
    return (field(b"\x02") + field(be(index, 4)) + field(be(size, 4)) +
            field(be(attr_bits, 4)) + field(digest_wire(policy)))


# --- the digest algebra ------------------------------------------------------

def upd_pcr(old, mask, composite):
    return H(old + be(CC_POLICY_PCR, 4) + be(mask, 4) + composite)


def upd_nv(old, operand, op, nv_name):
    args = H(operand + be(op, 2))
    return H(old + be(CC_POLICY_NV, 4) + args + nv_name)


def upd_or(branches):
    return H(ZERO + be(CC_POLICY_OR, 4) + b"".join(branches))


def upd_cc(old, code):
    return H(old + be(CC_POLICY_COMMAND_CODE, 4) + be(code, 4))


def upd_authvalue(old):
    return H(old + be(CC_POLICY_AUTHVALUE, 4))


def upd_secret(old, name):
    return H(old + be(CC_POLICY_SECRET, 4) + name)


def upd_timer(old, reference_ms, op):
    args = H(be(reference_ms, 8) + be(op, 2))
    return H(old + be(CC_POLICY_COUNTER_TIMER, 4) + args)


def upd_authorize(key_name, policy_ref):
    reset = H(ZERO + be(CC_POLICY_AUTHORIZE, 4) + key_name)
    return H(reset + policy_ref)


# --- synthetic fixture world -------------------------------------------------

DEVICE_ID = "0011223344556677"
RA_PUB = bytes(range(1, 33))
RA_NAME = name_of(external_key_area(RA_PUB))
PIN_NAME = name_of(nv_area(0x1400, 0, 0, ZERO))
# counter attribute bits: isCounter | openIncrement | openRead
CTR_NAME = name_of(nv_area(0x1500, 8, 1 | 4 | 8, ZERO))


def ref(label):
    return (label + ":" + DEVICE_ID).encode()


def eid_sign_chain():
    steps = []
    d = ZERO

    d = upd_pcr(d, 0b11, ZERO)
    steps.append(("pcr", d))

    d = upd_authorize(RA_NAME, ref("platform"))
    steps.append(("authorize", d))

    branches = []
    for k in range(3):
        b = upd_nv(d, be(k, 8), EO_EQ, CTR_NAME)
        b = upd_nv(b, be(k + 1, 8), EO_EQ, CTR_NAME)
        branches.append(b)
    d = upd_or(branches)
    steps.append(("or", d))

    d = upd_authorize(RA_NAME, ref("pinCount"))
    steps.append(("authorize", d))

    d = upd_secret(d, PIN_NAME)
    steps.append(("secret", d))

    d = upd_authorize(RA_NAME, ref("pinEntry"))
    steps.append(("authorize", d))

    d = upd_cc(d, CC_SIGN)
    steps.append(("command", d))

    return steps, branches


def main():
    steps, branches = eid_sign_chain()

    pair01 = upd_nv(upd_nv(ZERO, be(0, 8), EO_EQ, CTR_NAME), be(1, 8), EO_EQ, CTR_NAME)

    measurement = b"\xaa" * 32

    out = {
        "description": "Independent hash-chain computations pinned as golden values. "
                       "Formulas: docs/policy-digests.md; serializations: docs/state-format.md.",
        "sha256": {
            "empty": H(b"").hex(),
            "abc": H(b"abc").hex(),
        },
        "extend": {
            "measurement": measurement.hex(),
            "value": H(ZERO + measurement).hex(),
        },
        "external_key_name": {
            "public_key": RA_PUB.hex(),
            "name": RA_NAME.hex(),
        },
        "single_command_code_sign": upd_cc(ZERO, CC_SIGN).hex(),
        "auth_value_equals_password": upd_authvalue(ZERO).hex(),
        "timer_lt_100000_from_zero": upd_timer(ZERO, 100000, EO_LT).hex(),
        "pair01_from_zero": pair01.hex(),
        "synthetic": {
            "device_id": DEVICE_ID,
            "ra_public_key": RA_PUB.hex(),
            "ra_name": RA_NAME.hex(),
            "pin_name": PIN_NAME.hex(),
            "ctr_name": CTR_NAME.hex(),
            "eid_sign_steps": [{"command": c, "digest": d.hex()} for c, d in steps],
            "or_branch_digests": [b.hex() for b in branches],
            "trial_digest": steps[-1][1].hex(),
        },
    }

    path = os.path.join(os.path.dirname(__file__), "listings_golden.json")
    with open(path, "w") as f:
        json.dump(out, f, indent=2, sort_keys=True)
        f.write("\n")
    print("wrote", path)


if __name__ == "__main__":
    main()
