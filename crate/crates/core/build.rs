// LAPACK/BLAS symbols (zgesvd, zgeev, zheev, zpotrf, ...) are declared by
// lapack-sys but not linked by any backend crate; the system OpenBLAS
// bundles BLAS, CBLAS and LAPACK in one shared object.
fn main() {
    println!("cargo:rustc-link-lib=dylib=openblas");
}
