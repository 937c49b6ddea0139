#pragma once

#include <atomic>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <unistd.h>

#include "noshow/error.hpp"
#include "noshow/schema.hpp"
#include "noshow/time.hpp"

namespace noshow::test {

/// Runs `fn` and returns the code of the noshow::Error it throws, or nullopt.
template <class F>
std::optional<ErrorCode> error_code_of(F&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}


inline std::filesystem::path fixture(const std::string& name) { return std::filesystem::path(NOSHOW_FIXTURES) / name; }
inline std::filesystem::path golden(const std::string& name) { return std::filesystem::path(NOSHOW_GOLDEN) / name; }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("noshow-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& p) const { return path_ / p; }

 private:
  std::filesystem::path path_;
};

inline Date ymd(int y, unsigned m, unsigned d) { return Date{std::chrono::year{y} / m / d}; }

inline Timestamp at(int y, unsigned m, unsigned d, int hh, int mm, int offset = -300) {
  return Timestamp::from_local(ymd(y, m, d), hh, mm, offset);
}

inline AppointmentRecord record(std::string id, std::string patient, Timestamp scheduled, Timestamp booked,
                                Outcome outcome, std::string provider = "D001") {
  AppointmentRecord r;
  r.appointment_id = std::move(id);
  r.provider_id = std::move(provider);
  r.provider_specialty = "family_medicine";
  r.patient_id = std::move(patient);
  r.site_id = "main";
  r.scheduled_at = scheduled;
  r.booked_at = booked;
  r.outcome = outcome;
  return r;
}

}  // namespace noshow::test
