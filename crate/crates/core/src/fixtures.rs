//! Small schema fragments shared by tests, benches, and the experiment runner.

use crate::schema::SqlSchema;

/// Fragment of the `dog_kennels` database: `cell_number` exists, `cell_phone` does not.
pub fn dog_kennels() -> SqlSchema {
    SqlSchema::build(
        "dog_kennels",
        &[
            (
                "professionals",
                &[
                    "professional_id",
                    "email_address",
                    "cell_number",
                    "home_phone",
                ],
            ),
            ("dogs", &["dog_id", "age"]),
        ],
    )
    .expect("static schema")
}

/// Fragment of the `car_1` database: only `model_list` has both `maker` and `model`.
pub fn car_1() -> SqlSchema {
    SqlSchema::build(
        "car_1",
        &[
            ("car_makers", &["id", "maker", "fullname"]),
            ("model_list", &["modelid", "maker", "model"]),
        ],
    )
    .expect("static schema")
}

/// Two tables sharing column names, for ambiguity cases.
pub fn pets() -> SqlSchema {
    SqlSchema::build(
        "pets",
        &[
            ("people", &["id", "name", "age"]),
            ("pet", &["id", "owner_id", "species"]),
        ],
    )
    .expect("static schema")
}
