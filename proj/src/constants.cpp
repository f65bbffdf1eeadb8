#include "t1mr/constants.hpp"

#include <stdexcept>

namespace t1mr {

namespace {

template <class F>
void for_each_field(PhysicalConstants& c, F&& f) {
  f("gamma_nv", c.gamma_nv);
  f("gamma_e", c.gamma_e);
  f("gamma_n14", c.gamma_n14);
  f("d_nv", c.d_nv);
  f("a_par_nv", c.a_par_nv);
  f("a_perp_nv", c.a_perp_nv);
  f("q_nv", c.q_nv);
  f("a_par_nv_odmr", c.a_par_nv_odmr);
  f("a_par_p1", c.a_par_p1);
  f("a_perp_p1", c.a_perp_p1);
  f("q_p1", c.q_p1);
  f("gamma_h1", c.gamma_h1);
  f("gamma_c13", c.gamma_c13);
}

}  // namespace

nlohmann::json to_json(const PhysicalConstants& c) {
  nlohmann::json j = nlohmann::json::object();
  PhysicalConstants copy = c;
  for_each_field(copy, [&](const char* k, double& v) { j[k] = v; });
  return j;
}

PhysicalConstants constants_from_json(const nlohmann::json& j, PhysicalConstants base) {
  if (!j.is_object()) throw std::invalid_argument("constants: expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for_each_field(base, [&](const char* k, double&) { known = known || it.key() == k; });
    if (!known) throw std::invalid_argument("constants: unknown field '" + it.key() + "'");
  }
  for_each_field(base, [&](const char* k, double& v) {
    if (!j.contains(k)) return;
    if (!j.at(k).is_number())
      throw std::invalid_argument(std::string("constants: field '") + k + "' is not a number");
    v = j.at(k).get<double>();
  });
  return base;
}

nlohmann::json constants_provenance() {
  return {{"gamma_c13", "literature value, not a model input of the reference work"},
          {"d_nv", "2870.0 generic; 2870.5 for the measured probe"},
          {"a_par_nv_odmr", "used only in the field-conversion formula"}};
}

}  // namespace t1mr
