#pragma once

#include "pobilin/design.hpp"
#include "pobilin/linkfn.hpp"
#include "pobilin/lqg.hpp"
#include "pobilin/psr.hpp"

#include "json.hpp"

#include <string>

namespace pobilin {

using Json = nlohmann::json;

Json mat_to_json(const Mat& X);
Mat mat_from_json(const Json& j, const char* what);
Json vec_to_json(const Vec& v);
Vec vec_from_json(const Json& j, const char* what);

Json model_to_json(const TabularPomdp& m);
TabularPomdp model_from_json(const Json& j);

Json policy_to_json(const MMemoryPolicy& pi);
MMemoryPolicy policy_from_json(const Json& j);

Json link_to_json(const LinkFunction& g);
Json decoder_to_json(const Decoder& d);

Json psr_to_json(const LinearPsr& p);
// Hand-authored PSR; validated by simulation before it is returned.
LinearPsr psr_from_json(const Json& j, int validate_depth = 3);

Json lqg_model_to_json(const LqgModel& m);
LqgModel lqg_model_from_json(const Json& j);
Json linear_policy_to_json(const LinearPolicy& p);
LinearPolicy linear_policy_from_json(const Json& j);

Json design_to_json(const DesignResult& d);
Json alpha_design_to_json(const AlphaDesign& ad);

Json read_json_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace pobilin
