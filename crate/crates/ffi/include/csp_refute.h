#ifndef CSP_REFUTE_H
#define CSP_REFUTE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum CspStatus {
  CSP_STATUS_OK = 0,
  CSP_STATUS_NULL_POINTER = 1,
  CSP_STATUS_INVALID_UTF8 = 2,
  CSP_STATUS_INVALID_PARAMETERS = 3,
  CSP_STATUS_RESOURCE_LIMIT = 4,
  CSP_STATUS_FORMAT = 5,
  CSP_STATUS_IO = 6,
  CSP_STATUS_UNDEFINED = 7,
  CSP_STATUS_INTERNAL = 8,
  CSP_STATUS_PANIC = 9,
} CspStatus;

/**
 * Opaque certificate handle.
 */
typedef struct CspCertificate CspCertificate;

/**
 * Opaque instance handle.
 */
typedef struct CspInstance CspInstance;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until the next failing call.
 */
const char *csp_last_error_message(void);

/**
 * Frees a string returned by this library.
 *
 * # Safety
 * `s` must come from this library or be NULL.
 */
void csp_string_free(char *s);

/**
 * Parses an instance from JSON.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum CspStatus csp_instance_from_json(const char *json, struct CspInstance **out);

/**
 * Samples an instance. `family` is a JSON path or `builtin:NAME`.
 *
 * # Safety
 * `family` must be a NUL-terminated string; `out` must be writable.
 */
enum CspStatus csp_instance_sample(const char *family,
                                   uintptr_t n,
                                   double m_expected,
                                   uint64_t seed,
                                   struct CspInstance **out);

/**
 * Serializes an instance; free the result with `csp_string_free`.
 *
 * # Safety
 * `inst` must be a live handle; `out` must be writable.
 */
enum CspStatus csp_instance_to_json(const struct CspInstance *inst, char **out);

/**
 * Number of variables and constraints.
 *
 * # Safety
 * `inst` must be a live handle; the out pointers must be writable.
 */
enum CspStatus csp_instance_shape(const struct CspInstance *inst, uintptr_t *n, uintptr_t *m);

/**
 * # Safety
 * `inst` must come from this library or be NULL.
 */
void csp_instance_free(struct CspInstance *inst);

/**
 * Fraction of constraints satisfied by `x[0..len]`.
 *
 * # Safety
 * `x` must point to `len` readable values; `out` must be writable.
 */
enum CspStatus csp_eval_value(const struct CspInstance *inst,
                              const uint32_t *x,
                              uintptr_t len,
                              double *out);

/**
 * Exhaustive optimum; `x_out` (may be NULL) receives an optimal assignment of length n.
 *
 * # Safety
 * `out` must be writable; `x_out`, if non-NULL, must hold n values.
 */
enum CspStatus csp_brute_opt(const struct CspInstance *inst, double *out, uint32_t *x_out);

/**
 * Runs the refuter. `ell == 0` selects the default level; `monomial != 0` picks the monomial basis.
 *
 * # Safety
 * `inst` must be a live handle; `out` must be writable.
 */
enum CspStatus csp_refute(const struct CspInstance *inst,
                          uintptr_t t,
                          uintptr_t ell,
                          double epsilon,
                          int32_t monomial,
                          struct CspCertificate **out);

/**
 * Certified upper bound and whether it is fully certified (1) or heuristic (0).
 *
 * # Safety
 * `cert` must be a live handle; `bound` must be writable, `certified` may be NULL.
 */
enum CspStatus csp_certificate_bound(const struct CspCertificate *cert,
                                     double *bound,
                                     int32_t *certified);

/**
 * Serializes a certificate; free the result with `csp_string_free`.
 *
 * # Safety
 * `cert` must be a live handle; `out` must be writable.
 */
enum CspStatus csp_certificate_to_json(const struct CspCertificate *cert, char **out);

/**
 * # Safety
 * `cert` must come from this library or be NULL.
 */
void csp_certificate_free(struct CspCertificate *cert);

/**
 * opt_t of a family (JSON path or `builtin:NAME`) with net resolution from `epsilon`.
 *
 * # Safety
 * `family` must be a NUL-terminated string; `out` must be writable.
 */
enum CspStatus csp_opt_t(const char *family, uintptr_t t, double epsilon, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CSP_REFUTE_H */
