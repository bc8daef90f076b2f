use std::process::exit;

fn main() {
    match evoctrl::cli::run(std::env::args_os()) {
        Ok(code) => exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            exit(e.exit_code());
        }
    }
}
