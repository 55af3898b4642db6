fn main() {
    netexplain_cli::run()
}
