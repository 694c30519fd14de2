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

#include "tpm2eid/cli.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tpm2eid/ea_engine.hpp"
#include "tpm2eid/eid_helper.hpp"
#include "tpm2eid/errors.hpp"
#include "tpm2eid/policy_dsl.hpp"
#include "tpm2eid/ra_authority.hpp"
#include "tpm2eid/tpm_store.hpp"

namespace tpm2eid::cli {

namespace {

namespace fs = std::filesystem;

struct Paths {
    fs::path store;
    fs::path registry() const { return store.string() + ".ra"; }
    fs::path helper() const { return store.string() + ".helper"; }
    fs::path lock() const { return store.string() + ".lock"; }
};

// Advisory lock held for the whole invocation.
class FileLock {
public:
    explicit FileLock(const fs::path& path) {
        fd_ = ::open(path.c_str(), O_CREAT | O_RDWR, 0600);
        if (fd_ >= 0) {
            ::flock(fd_, LOCK_EX);
        }
    }
    ~FileLock() {
        if (fd_ >= 0) {
            ::flock(fd_, LOCK_UN);
            ::close(fd_);
        }
    }
    FileLock(const FileLock&) = delete;
    FileLock& operator=(const FileLock&) = delete;

private:
    int fd_ = -1;
};

Bytes read_file(const fs::path& path, const char* command) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw TpmError(ErrorStage::command, command, "cannot open file: " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    std::string s = buf.str();
    return Bytes(s.begin(), s.end());
}

void write_file(const fs::path& path, ByteView data, const char* command) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw TpmError(ErrorStage::command, command, "cannot write file: " + path.string());
    }
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size()));
}

std::string read_text_file(const fs::path& path, const char* command) {
    Bytes b = read_file(path, command);
    return std::string(b.begin(), b.end());
}

struct World {
    tpm::TpmStore store;
    ra::RaAuthority ra = ra::RaAuthority::create(crypto::DeterministicRng::from_seed(0));
    eid::HelperState helper;
};

World load_world(const Paths& paths) {
    World w;
    w.store = tpm::load_state(paths.store);
    w.ra = ra::RaAuthority::load(paths.registry());
    w.helper = eid::HelperState::load(paths.helper());
    return w;
}

void save_world(const Paths& paths, const World& w) {
    tpm::save_state(w.store, paths.store);
    w.ra.save(paths.registry());
    w.helper.save(paths.helper());
}

eid::EidCredential& pick_credential(eid::HelperState& helper, const std::string& prefix,
                                    const char* command) {
    if (helper.credentials.empty()) {
        throw TpmError(ErrorStage::command, command, "no enrolled credential");
    }
    if (prefix.empty()) {
        if (helper.credentials.size() > 1) {
            throw TpmError(ErrorStage::command, command,
                           "several credentials enrolled; pass --cred <id-prefix>");
        }
        return helper.credentials.front();
    }
    eid::EidCredential* cred = eid::find_credential(helper, prefix);
    if (cred == nullptr) {
        throw TpmError(ErrorStage::command, command, "credential id not found or ambiguous");
    }
    return *cred;
}

Digest parse_measurement(const std::string& hex, const char* command) {
    try {
        return Digest::from_hex(hex);
    } catch (const std::invalid_argument&) {
        throw TpmError(ErrorStage::command, command, "measurement must be 64 hex digits");
    }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"TPM 2.0 enhanced-authorization eID toolkit"};
    app.require_subcommand(1);

    std::string state_path = "tpm.state";
    app.add_option("--state", state_path, "state file path")->capture_default_str();

    // init
    auto* cmd_init = app.add_subcommand("init", "create a fresh device state");
    std::optional<std::uint64_t> seed;
    std::uint64_t clock_interval = tpm::kDefaultClockPersistIntervalMs;
    cmd_init->add_option("--seed", seed, "deterministic seed for all randomness");
    cmd_init->add_option("--clock-interval-ms", clock_interval,
                         "clock persistence interval (simulated ms)");

    // boot
    auto* cmd_boot = app.add_subcommand("boot", "extend boot measurements into the PCR bank");
    std::vector<std::string> measurements;
    cmd_boot->add_option("--measure", measurements, "measurement digests, one per PCR slot")
        ->required()
        ->expected(-1);

    // pin provision | pin change
    auto* cmd_pin = app.add_subcommand("pin", "PIN management");
    cmd_pin->require_subcommand(1);
    auto* cmd_pin_provision = cmd_pin->add_subcommand("provision", "define PIN and retry counter");
    std::string pin_value;
    cmd_pin_provision->add_option("pin", pin_value, "the PIN")->required();
    auto* cmd_pin_change = cmd_pin->add_subcommand("change", "replace the PIN, keeping its name");
    std::string old_pin, new_pin;
    cmd_pin_change->add_option("old", old_pin, "current PIN")->required();
    cmd_pin_change->add_option("new", new_pin, "new PIN")->required();

    // puk show-once
    auto* cmd_puk = app.add_subcommand("puk", "PUK management");
    cmd_puk->require_subcommand(1);
    auto* cmd_puk_show = cmd_puk->add_subcommand(
        "show-once", "generate the PUK and print it (possible exactly once)");

    // enroll
    auto* cmd_enroll = app.add_subcommand("enroll", "create and enroll a signing key");
    bool with_revocation = false;
    std::uint64_t window_ms = 0;
    std::string cert_out;
    cmd_enroll->add_flag("--with-revocation", with_revocation,
                         "include the dead-man-switch fragment");
    cmd_enroll->add_option("--window-ms", window_ms, "initial revocation window (simulated ms)");
    cmd_enroll->add_option("--cert-out", cert_out, "write the issued certificate here");

    // sign
    auto* cmd_sign = app.add_subcommand("sign", "sign a document with the eID key");
    std::string sign_in, sign_pin, sign_out, sign_cred;
    cmd_sign->add_option("--in", sign_in, "document to sign")->required();
    cmd_sign->add_option("--pin", sign_pin, "the PIN")->required();
    cmd_sign->add_option("--out", sign_out, "signature output path (default <in>.sig)");
    cmd_sign->add_option("--cred", sign_cred, "credential id prefix");

    // verify
    auto* cmd_verify = app.add_subcommand("verify", "verify a signature against a certificate");
    std::string verify_cert, verify_sig, verify_in;
    cmd_verify->add_option("--cert", verify_cert, "certificate file")->required();
    cmd_verify->add_option("--sig", verify_sig, "signature file")->required();
    cmd_verify->add_option("--in", verify_in, "document")->required();

    // reset-counter
    auto* cmd_reset = app.add_subcommand("reset-counter", "reset the retry counter with the PUK");
    std::string puk_value;
    cmd_reset->add_option("--puk", puk_value, "the PUK")->required();

    // repair-counter
    auto* cmd_repair =
        app.add_subcommand("repair-counter", "recreate a counter lost mid-reset");

    // license refresh | import
    auto* cmd_license = app.add_subcommand("license", "revocation license management");
    cmd_license->require_subcommand(1);
    auto* cmd_license_refresh =
        cmd_license->add_subcommand("refresh", "obtain a fresh time license from the RA");
    std::uint64_t refresh_window = 0;
    std::string license_cred, license_out;
    cmd_license_refresh->add_option("--window-ms", refresh_window, "window length (simulated ms)")
        ->required();
    cmd_license_refresh->add_option("--cred", license_cred, "credential id prefix");
    cmd_license_refresh->add_option("--out", license_out, "also write the license file here");
    auto* cmd_license_import =
        cmd_license->add_subcommand("import", "install a license file into the bundle");
    std::string license_in;
    cmd_license_import->add_option("file", license_in, "license file")->required();
    cmd_license_import->add_option("--cred", license_cred, "credential id prefix");

    // clock advance
    auto* cmd_clock = app.add_subcommand("clock", "simulated clock control");
    cmd_clock->require_subcommand(1);
    auto* cmd_clock_advance = cmd_clock->add_subcommand("advance", "advance the device clock");
    std::uint64_t advance_ms = 0;
    cmd_clock_advance->add_option("--ms", advance_ms, "milliseconds to advance")->required();

    // policy compile | explain
    auto* cmd_policy = app.add_subcommand("policy", "policy language tooling");
    cmd_policy->require_subcommand(1);
    std::string policy_file;
    auto* cmd_policy_compile =
        cmd_policy->add_subcommand("compile", "compile a policy file and print its digest");
    cmd_policy_compile->add_option("file", policy_file, "policy source (.pol)")->required();
    auto* cmd_policy_explain =
        cmd_policy->add_subcommand("explain", "print the hash chain of a policy file");
    cmd_policy_explain->add_option("file", policy_file, "policy source (.pol)")->required();

    // ra revoke
    auto* cmd_ra = app.add_subcommand("ra", "registration authority operations");
    cmd_ra->require_subcommand(1);
    auto* cmd_ra_revoke = cmd_ra->add_subcommand("revoke", "mark a credential revoked");
    std::string revoke_id;
    cmd_ra_revoke->add_option("credId", revoke_id, "credential id")->required();

    try {
        app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << e.what() << "\n";
        return 2;
    }

    Paths paths{state_path};
    FileLock lock(paths.lock());

    try {
        if (cmd_init->parsed()) {
            if (fs::exists(paths.store)) {
                throw TpmError(ErrorStage::command, "init", "state file already exists");
            }
            tpm::TpmStore store = tpm::init_store(seed, clock_interval);
            ra::RaAuthority authority =
                ra::RaAuthority::create(store.rng.derive("ra-authority"));
            eid::HelperState helper = eid::init_helper(store, authority);
            tpm::save_state(store, paths.store);
            authority.save(paths.registry());
            helper.save(paths.helper());
            out << "device " << store.device_id << "\n";
            return 0;
        }

        World w = load_world(paths);

        if (cmd_boot->parsed()) {
            for (std::size_t i = 0; i < measurements.size(); ++i) {
                Digest m = parse_measurement(measurements[i], "boot");
                Digest pcr = tpm::pcr_extend(w.store, static_cast<std::uint32_t>(i), m);
                out << "pcr" << i << " " << pcr.hex() << "\n";
            }
            save_world(paths, w);
        } else if (cmd_pin_provision->parsed()) {
            eid::PinRecord rec = eid::provision_pin(w.store, w.helper, to_bytes(pin_value));
            secure_wipe(pin_value);
            out << "pin nv 0x" << std::hex << rec.nv_index << std::dec << " name "
                << rec.name.hex() << "\n";
            save_world(paths, w);
        } else if (cmd_pin_change->parsed()) {
            eid::change_pin(w.store, w.helper, to_bytes(old_pin), to_bytes(new_pin));
            secure_wipe(old_pin);
            secure_wipe(new_pin);
            out << "pin changed\n";
            save_world(paths, w);
        } else if (cmd_puk_show->parsed()) {
            eid::PukRecord rec = eid::provision_puk(w.store, w.helper);
            out << std::string(rec.auth_value.begin(), rec.auth_value.end()) << "\n";
            secure_wipe(rec.auth_value);
            save_world(paths, w);
        } else if (cmd_enroll->parsed()) {
            eid::EnrollResult res =
                eid::enroll_key(w.store, w.helper, w.ra, with_revocation, window_ms);
            out << "credential " << res.credential.id << "\n";
            if (!cert_out.empty()) {
                ra::save_certificate(res.credential.certificate, cert_out);
            }
            save_world(paths, w);
        } else if (cmd_sign->parsed()) {
            Bytes doc = read_file(sign_in, "sign");
            Digest digest = crypto::hash(doc);
            eid::EidCredential& cred = pick_credential(w.helper, sign_cred, "sign");
            Bytes pin_bytes = to_bytes(sign_pin);
            secure_wipe(sign_pin);
            Bytes signature;
            try {
                signature = eid::sign_with_pin(w.store, w.helper, cred, pin_bytes, digest);
            } catch (...) {
                secure_wipe(pin_bytes);
                save_world(paths, w);  // consumed attempts must persist
                throw;
            }
            secure_wipe(pin_bytes);
            fs::path out_path = sign_out.empty() ? fs::path(sign_in + ".sig") : fs::path(sign_out);
            write_file(out_path, signature, "sign");
            out << "signature " << out_path.string() << "\n";
            save_world(paths, w);
        } else if (cmd_verify->parsed()) {
            ra::Certificate cert = ra::load_certificate(verify_cert);
            if (!ra::verify_certificate(cert, w.helper.ca_public_key)) {
                throw TpmError(ErrorStage::command, "verify", "certificate signature invalid");
            }
            Bytes doc = read_file(verify_in, "verify");
            Bytes signature = read_file(verify_sig, "verify");
            if (!crypto::verify(cert.public_key, crypto::hash(doc).view(), signature)) {
                throw TpmError(ErrorStage::command, "verify", "signature invalid");
            }
            out << "OK\n";
        } else if (cmd_reset->parsed()) {
            eid::reset_counter_with_puk(w.store, w.helper, to_bytes(puk_value));
            secure_wipe(puk_value);
            out << "counter reset\n";
            save_world(paths, w);
        } else if (cmd_repair->parsed()) {
            eid::repair_counter(w.store, w.helper);
            out << "counter repaired\n";
            save_world(paths, w);
        } else if (cmd_license_refresh->parsed()) {
            eid::EidCredential& cred = pick_credential(w.helper, license_cred, "license-refresh");
            eid::refresh_revocation_license(w.store, w.helper, w.ra, cred, refresh_window);
            const auto& lic = cred.licenses.at("revocation");
            if (!license_out.empty()) {
                ra::save_license(lic, license_out);
            }
            out << "license window ends at " << *lic.not_after_ms << "\n";
            save_world(paths, w);
        } else if (cmd_license_import->parsed()) {
            eid::EidCredential& cred = pick_credential(w.helper, license_cred, "license-import");
            ra::AuthorizationLicense lic = ra::load_license(license_in);
            if (!lic.not_after_ms) {
                throw TpmError(ErrorStage::command, "license-import",
                               "only time licenses are importable");
            }
            cred.licenses["revocation"] = lic;
            out << "license imported\n";
            save_world(paths, w);
        } else if (cmd_clock_advance->parsed()) {
            std::uint64_t now = tpm::clock_advance(w.store, advance_ms);
            out << "clock " << now << "\n";
            save_world(paths, w);
        } else if (cmd_policy_compile->parsed() || cmd_policy_explain->parsed()) {
            std::string source = read_text_file(policy_file, "policy");
            dsl::PolicyAst ast = dsl::parse(source);
            dsl::CompiledPolicy compiled =
                dsl::compile(ast, eid::helper_symbols(w.helper), w.store);
            if (cmd_policy_compile->parsed()) {
                out << compiled.trial_digest.hex() << "\n";
            } else {
                out << dsl::explain(compiled);
            }
        } else if (cmd_ra_revoke->parsed()) {
            w.ra.revoke(revoke_id);
            out << "revoked\n";
            save_world(paths, w);
        }
        return 0;
    } catch (const TpmError& e) {
        nlohmann::json line = {{"stage", to_string(e.stage())},
                               {"command", e.command()},
                               {"reason", e.reason()}};
        err << line.dump() << "\n";
        return 1;
    } catch (const dsl::ParseError& e) {
        nlohmann::json line = {{"stage", "command"},
                               {"command", "policy-parse"},
                               {"reason", e.what()}};
        err << line.dump() << "\n";
        return 1;
    }
}

}  // namespace tpm2eid::cli
