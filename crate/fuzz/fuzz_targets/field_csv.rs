#![no_main]
use std::sync::OnceLock;

use flatmap::mesh::{build_mesh, Mesh};
use libfuzzer_sys::fuzz_target;

fn mesh() -> &'static Mesh {
    static MESH: OnceLock<Mesh> = OnceLock::new();
    MESH.get_or_init(|| build_mesh(2).expect("m = 2 is a valid level"))
}

fuzz_target!(|data: &[u8]| {
    if let Ok(u) = mesh().read_field_csv(data) {
        assert_eq!(u.len(), mesh().num_dofs());
    }
});
