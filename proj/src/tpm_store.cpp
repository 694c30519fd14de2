// Copyright (c) 2026 The tpm2eid Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "tpm2eid/tpm_store.hpp"

#include <algorithm>

#include "tpm2eid/command_codes.hpp"
#include "tpm2eid/ea_engine.hpp"
#include "tpm2eid/errors.hpp"

namespace tpm2eid::tpm {

namespace {

// Tags keep key and NV public areas from ever colliding byte-wise.
constexpr std::uint8_t kKindKey = 0x01;
constexpr std::uint8_t kKindNv = 0x02;
constexpr std::uint8_t kKindExternalKey = 0x03;

constexpr std::size_t kProofValueSize = 32;
constexpr std::size_t kDeviceIdSize = 8;

Bytes digest_wire(const Digest& d) {
    Bytes out = be16(d.alg_id);
    out.insert(out.end(), d.bytes.begin(), d.bytes.end());
    return out;
}

NvIndex& require_nv(TpmStore& store, std::uint32_t index, const char* command) {
    auto it = store.nv.find(index);
    if (it == store.nv.end()) {
        throw TpmError(ErrorStage::command, command, "no such NV index");
    }
    return it->second;
}

// Password or satisfied policy session; open paths are handled by callers.
void check_nv_authorization(TpmStore& store, NvIndex& nv, const Authorization& auth,
                            std::uint32_t command_code, const char* command) {
    if (std::holds_alternative<std::monostate>(auth)) {
        throw TpmError(ErrorStage::command, command, "authorization required");
    }
    if (const auto* pw = std::get_if<PasswordAuth>(&auth)) {
        if (pw->value != nv.auth_value) {
            throw TpmError(ErrorStage::command, command, "authValue mismatch");
        }
        return;
    }
    const auto& session = std::get<SessionAuth>(auth);
    std::optional<ByteView> supplied;
    if (session.auth_value) {
        supplied = ByteView(*session.auth_value);
    }
    gate(store, session.handle, command_code, nv.auth_policy, nv.auth_value, supplied);
}

}  // namespace

std::uint32_t KeyAttributes::bits() const {
    return (sign_capable ? 1u : 0u) | (fixed_to_store ? 2u : 0u);
}

KeyAttributes KeyAttributes::from_bits(std::uint32_t bits) {
    return KeyAttributes{(bits & 1u) != 0, (bits & 2u) != 0};
}

std::uint32_t NvAttributes::bits() const {
    return (is_counter ? 1u : 0u) | (written_once ? 2u : 0u) | (open_increment ? 4u : 0u) |
           (open_read ? 8u : 0u);
}

NvAttributes NvAttributes::from_bits(std::uint32_t bits) {
    return NvAttributes{(bits & 1u) != 0, (bits & 2u) != 0, (bits & 4u) != 0, (bits & 8u) != 0};
}

Bytes key_public_area(ByteView public_key, std::uint16_t scheme_id, KeyAttributes attributes,
                      const Digest& auth_policy) {
    FieldWriter w;
    w.field_u8(kKindKey)
        .field(public_key)
        .field_u16(scheme_id)
        .field_u32(attributes.bits())
        .field(digest_wire(auth_policy));
    return w.take();
}

Bytes nv_public_area(std::uint32_t index, std::uint32_t size, NvAttributes attributes,
                     const Digest& auth_policy) {
    FieldWriter w;
    w.field_u8(kKindNv)
        .field_u32(index)
        .field_u32(size)
        .field_u32(attributes.bits())
        .field(digest_wire(auth_policy));
    return w.take();
}

Bytes external_key_public_area(ByteView public_key, std::uint16_t scheme_id) {
    FieldWriter w;
    w.field_u8(kKindExternalKey).field(public_key).field_u16(scheme_id);
    return w.take();
}

Bytes KeyObject::public_area() const {
    return key_public_area(public_key, scheme_id, attributes, auth_policy);
}

ObjectName KeyObject::name() const { return crypto::compute_object_name(public_area()); }

Bytes NvIndex::public_area() const { return nv_public_area(index, size, attributes, auth_policy); }

ObjectName NvIndex::name() const { return crypto::compute_object_name(public_area()); }

std::uint64_t NvIndex::counter_value() const {
    if (!attributes.is_counter) {
        throw TpmError(ErrorStage::command, "NV_Read", "not a counter index");
    }
    return read_be64(data);
}

TpmStore init_store(std::optional<std::uint64_t> seed, std::uint64_t clock_persist_interval_ms) {
    TpmStore store;
    store.rng = seed ? crypto::DeterministicRng::from_seed(*seed)
                     : crypto::DeterministicRng::from_entropy();
    store.proof_value = store.rng.generate(kProofValueSize);
    store.device_id = to_hex(store.rng.generate(kDeviceIdSize));
    store.clock.persist_interval_ms = clock_persist_interval_ms;
    return store;
}

Digest pcr_extend(TpmStore& store, std::uint32_t pcr_index, const Digest& measurement) {
    if (pcr_index >= store.pcr_bank.pcrs.size()) {
        throw TpmError(ErrorStage::command, "PCR_Extend", "PCR index out of range");
    }
    Digest& pcr = store.pcr_bank.pcrs[pcr_index];
    pcr = crypto::extend(pcr, measurement.view());
    store.pcr_bank.update_counter += 1;
    return pcr;
}

Digest pcr_composite(const TpmStore& store, std::uint32_t pcr_mask) {
    Bytes buf;
    for (std::size_t i = 0; i < store.pcr_bank.pcrs.size(); ++i) {
        if (pcr_mask & (1u << i)) {
            const auto& d = store.pcr_bank.pcrs[i];
            buf.insert(buf.end(), d.bytes.begin(), d.bytes.end());
        }
    }
    return crypto::hash(buf);
}

ObjectName nv_define_space(TpmStore& store, std::uint32_t index, std::uint32_t size,
                           NvAttributes attributes, ByteView auth_value,
                           const Digest& auth_policy) {
    if (store.nv.contains(index)) {
        throw TpmError(ErrorStage::command, "NV_DefineSpace", "index occupied");
    }
    if (attributes.is_counter && size != kCounterSize) {
        throw TpmError(ErrorStage::command, "NV_DefineSpace", "counter index must be 8 bytes");
    }
    NvIndex nv;
    nv.index = index;
    nv.size = size;
    nv.attributes = attributes;
    nv.auth_policy = auth_policy;
    nv.auth_value.assign(auth_value.begin(), auth_value.end());
    nv.data.assign(size, 0);
    ObjectName name = nv.name();
    store.nv.emplace(index, std::move(nv));
    return name;
}

void nv_undefine_space(TpmStore& store, std::uint32_t index, const Authorization& auth) {
    NvIndex& nv = require_nv(store, index, "NV_UndefineSpace");
    check_nv_authorization(store, nv, auth, cc::kNvUndefineSpace, "NV_UndefineSpace");
    store.nv.erase(index);
}

std::uint64_t nv_increment(TpmStore& store, std::uint32_t index, const Authorization& auth) {
    NvIndex& nv = require_nv(store, index, "NV_Increment");
    if (!nv.attributes.is_counter) {
        throw TpmError(ErrorStage::command, "NV_Increment", "not a counter index");
    }
    if (!nv.attributes.open_increment) {
        check_nv_authorization(store, nv, auth, cc::kNvIncrement, "NV_Increment");
    }
    std::uint64_t value = read_be64(nv.data) + 1;
    nv.data = be64(value);
    return value;
}

Bytes nv_read(TpmStore& store, std::uint32_t index, const Authorization& auth) {
    NvIndex& nv = require_nv(store, index, "NV_Read");
    if (!nv.attributes.open_read) {
        check_nv_authorization(store, nv, auth, cc::kNvRead, "NV_Read");
    }
    return nv.data;
}

CreatedKey create_key(TpmStore& store, const Digest& auth_policy, ByteView auth_value,
                      KeyAttributes attributes, std::uint32_t creation_pcr_mask) {
    KeyObject key;
    key.handle = store.next_key_handle++;
    auto keypair = crypto::derive_keypair(store.rng.generate(32));
    key.public_key = std::move(keypair.public_part);
    key.private_key = std::move(keypair.private_part);
    key.scheme_id = keypair.scheme_id;
    key.attributes = attributes;
    key.auth_policy = auth_policy;
    key.auth_value.assign(auth_value.begin(), auth_value.end());
    key.creation.pcr_mask = creation_pcr_mask;
    key.creation.pcr_digest = pcr_composite(store, creation_pcr_mask);
    key.creation.auth_policy = auth_policy;

    CreatedKey created{key.handle, key.creation, key.name()};
    store.keys.emplace(key.handle, std::move(key));
    return created;
}

std::uint32_t load_external(TpmStore& store, ByteView public_key) {
    if (public_key.size() != 32) {
        throw TpmError(ErrorStage::command, "LoadExternal", "malformed public key");
    }
    LoadedExternalKey ext;
    ext.handle = store.next_external_handle++;
    ext.public_key.assign(public_key.begin(), public_key.end());
    ext.name = crypto::compute_object_name(external_key_public_area(public_key, ext.scheme_id));
    std::uint32_t handle = ext.handle;
    store.loaded_external.emplace(handle, std::move(ext));
    return handle;
}

std::uint64_t clock_read(const TpmStore& store) { return store.clock.milliseconds; }

std::uint64_t clock_advance(TpmStore& store, std::uint64_t delta_ms) {
    store.clock.milliseconds += delta_ms;
    if (store.clock.milliseconds - store.clock.last_persisted_at >=
        store.clock.persist_interval_ms) {
        store.clock.last_persisted_at = store.clock.milliseconds;
    }
    return store.clock.milliseconds;
}

}  // namespace tpm2eid::tpm
