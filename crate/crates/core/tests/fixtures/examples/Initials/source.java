public class Initials {
    public static void main(String[] args) {
        String fullName = "John Smith";
        int spaceIndex = fullName.indexOf(' ');
        String firstName = fullName.substring(0, spaceIndex);
        String lastName = fullName.substring(spaceIndex + 1);
        String initials = "" + firstName.charAt(0) + lastName.charAt(0);
        System.out.println("Initials: " + initials);
    }
}
