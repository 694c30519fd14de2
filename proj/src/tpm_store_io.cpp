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

#include <json.hpp>

#include "tpm2eid/errors.hpp"
#include "tpm2eid/state_file.hpp"
#include "tpm2eid/tpm_store.hpp"

namespace tpm2eid::tpm {

namespace {

using nlohmann::json;

constexpr const char* kStoreKind = "tpm-store";

json digest_to_json(const Digest& d) { return d.hex(); }

Digest digest_from_json(const json& j) { return Digest::from_hex(j.get<std::string>()); }

}  // namespace

void save_state(const TpmStore& store, const std::filesystem::path& path) {
    json body;
    body["deviceId"] = store.device_id;
    body["proofValue"] = to_hex(store.proof_value);
    body["rng"] = {{"state", to_hex(ByteView(store.rng.state().data(), store.rng.state().size()))},
                   {"counter", store.rng.counter()}};
    json pcrs = json::array();
    for (const auto& d : store.pcr_bank.pcrs) {
        pcrs.push_back(digest_to_json(d));
    }
    body["pcr"] = {{"values", pcrs}, {"updateCounter", store.pcr_bank.update_counter}};
    // Only the persisted snapshot survives; the live clock value is volatile.
    body["clock"] = {{"persistedMs", store.clock.last_persisted_at},
                     {"persistIntervalMs", store.clock.persist_interval_ms}};
    json keys = json::array();
    for (const auto& [handle, key] : store.keys) {
        keys.push_back({{"handle", handle},
                        {"publicKey", to_hex(key.public_key)},
                        {"schemeId", key.scheme_id},
                        {"attributes", key.attributes.bits()},
                        {"authPolicy", digest_to_json(key.auth_policy)},
                        {"authValue", to_hex(key.auth_value)},
                        {"privateKey", to_hex(key.private_key)},
                        {"creation",
                         {{"pcrMask", key.creation.pcr_mask},
                          {"pcrDigest", digest_to_json(key.creation.pcr_digest)},
                          {"authPolicy", digest_to_json(key.creation.auth_policy)}}}});
    }
    body["keys"] = keys;
    json nvs = json::array();
    for (const auto& [index, nv] : store.nv) {
        nvs.push_back({{"index", index},
                       {"size", nv.size},
                       {"attributes", nv.attributes.bits()},
                       {"authPolicy", digest_to_json(nv.auth_policy)},
                       {"authValue", to_hex(nv.auth_value)},
                       {"data", to_hex(nv.data)}});
    }
    body["nv"] = nvs;
    body["nextKeyHandle"] = store.next_key_handle;
    body["sessionCap"] = store.session_cap;

    save_envelope(path, kStoreKind, body);
}

TpmStore load_state(const std::filesystem::path& path) {
    json body = load_envelope(path, kStoreKind);
    try {
        TpmStore store;
        store.device_id = body.at("deviceId").get<std::string>();
        store.proof_value = from_hex(body.at("proofValue").get<std::string>());
        {
            Bytes state = from_hex(body.at("rng").at("state").get<std::string>());
            if (state.size() != crypto::kDigestSize) {
                throw std::invalid_argument("bad rng state size");
            }
            std::array<std::uint8_t, crypto::kDigestSize> arr{};
            std::copy(state.begin(), state.end(), arr.begin());
            store.rng =
                crypto::DeterministicRng(arr, body.at("rng").at("counter").get<std::uint64_t>());
        }
        const auto& pcr = body.at("pcr");
        store.pcr_bank.pcrs.clear();
        for (const auto& v : pcr.at("values")) {
            store.pcr_bank.pcrs.push_back(digest_from_json(v));
        }
        store.pcr_bank.update_counter = pcr.at("updateCounter").get<std::uint64_t>();
        const auto& clock = body.at("clock");
        store.clock.last_persisted_at = clock.at("persistedMs").get<std::uint64_t>();
        store.clock.milliseconds = store.clock.last_persisted_at;
        store.clock.persist_interval_ms = clock.at("persistIntervalMs").get<std::uint64_t>();
        for (const auto& k : body.at("keys")) {
            KeyObject key;
            key.handle = k.at("handle").get<std::uint32_t>();
            key.public_key = from_hex(k.at("publicKey").get<std::string>());
            key.scheme_id = k.at("schemeId").get<std::uint16_t>();
            key.attributes = KeyAttributes::from_bits(k.at("attributes").get<std::uint32_t>());
            key.auth_policy = digest_from_json(k.at("authPolicy"));
            key.auth_value = from_hex(k.at("authValue").get<std::string>());
            key.private_key = from_hex(k.at("privateKey").get<std::string>());
            key.creation.pcr_mask = k.at("creation").at("pcrMask").get<std::uint32_t>();
            key.creation.pcr_digest = digest_from_json(k.at("creation").at("pcrDigest"));
            key.creation.auth_policy = digest_from_json(k.at("creation").at("authPolicy"));
            store.keys.emplace(key.handle, std::move(key));
        }
        for (const auto& n : body.at("nv")) {
            NvIndex nv;
            nv.index = n.at("index").get<std::uint32_t>();
            nv.size = n.at("size").get<std::uint32_t>();
            nv.attributes = NvAttributes::from_bits(n.at("attributes").get<std::uint32_t>());
            nv.auth_policy = digest_from_json(n.at("authPolicy"));
            nv.auth_value = from_hex(n.at("authValue").get<std::string>());
            nv.data = from_hex(n.at("data").get<std::string>());
            store.nv.emplace(nv.index, std::move(nv));
        }
        store.next_key_handle = body.at("nextKeyHandle").get<std::uint32_t>();
        store.session_cap = body.at("sessionCap").get<std::size_t>();
        return store;
    } catch (const json::exception& e) {
        throw TpmError(ErrorStage::state, kStoreKind, std::string("malformed body: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw TpmError(ErrorStage::state, kStoreKind, std::string("malformed body: ") + e.what());
    }
}

}  // namespace tpm2eid::tpm
